#include "chexlab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "chexlab/parser.hpp"

namespace chexlab {

namespace {

constexpr int kV = tok::kVocabSize;

void softmax_from_logits(std::span<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

// grad += coefficient-weighted dL/dz at one state, through the linear maps.
void accumulate_logit_grad(const PolicyParams& params, const Observation& obs,
                           std::span<const double> bag, std::span<const double> dldz,
                           std::span<double> grad) {
  const int dim = params.dim();
  double* gwf = grad.data();
  double* gwc = grad.data() + static_cast<size_t>(kV) * dim;
  double* gb = gwc + static_cast<size_t>(kV) * kV;
  for (int v = 0; v < kV; ++v) {
    const double err = dldz[static_cast<size_t>(v)];
    if (err == 0.0) continue;
    double* gwfr = gwf + static_cast<size_t>(v) * dim;
    for (int i = 0; i < dim; ++i) gwfr[i] += err * obs.features[static_cast<size_t>(i)];
    double* gwcr = gwc + static_cast<size_t>(v) * kV;
    for (int u = 0; u < kV; ++u) gwcr[u] += err * bag[static_cast<size_t>(u)];
    gb[v] += err;
  }
}

}  // namespace

std::vector<int> oracle_tokens(LabelSet y) {
  if (y.empty()) throw std::invalid_argument("oracle_tokens: empty label set");
  std::vector<int> toks;
  const std::vector<int> ids = y.ids();
  auto emit_list = [&](int open, int close) {
    toks.push_back(open);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (k > 0) toks.push_back(tok::kComma);
      toks.push_back(tok::label_token(ids[k]));
    }
    toks.push_back(close);
  };
  emit_list(tok::kThinkOpen, tok::kThinkClose);
  emit_list(tok::kSolOpen, tok::kSolClose);
  toks.push_back(tok::kEos);
  return toks;
}

SftExample make_sft_example(Observation obs, LabelSet y) {
  SftExample ex;
  ex.obs = std::move(obs);
  ex.tokens = oracle_tokens(y);
  ex.mask.assign(ex.tokens.size(), 1);
  return ex;
}

std::pair<double, std::vector<double>> sft_loss(const PolicyParams& params,
                                                std::span<const SftExample> batch) {
  long mask_total = 0;
  for (const SftExample& ex : batch) {
    if (ex.tokens.size() != ex.mask.size()) {
      throw std::invalid_argument("sft_loss: mask/token length mismatch");
    }
    for (uint8_t m : ex.mask) mask_total += m;
  }
  if (mask_total == 0) throw std::invalid_argument("sft_loss: all-zero mask");

  double loss = 0.0;
  std::vector<double> grad(params.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(mask_total);
  std::vector<double> weights;
  for (const SftExample& ex : batch) {
    const std::vector<double> lp = logprob(params, ex.obs, ex.tokens);
    weights.assign(ex.tokens.size(), 0.0);
    for (size_t j = 0; j < ex.tokens.size(); ++j) {
      if (!ex.mask[j]) continue;
      loss -= lp[j] * inv;
      weights[j] = -inv;  // d(loss)/d(logprob_j)
    }
    add_weighted_logprob_grad(params, ex.obs, ex.tokens, weights, grad);
  }
  return {loss, std::move(grad)};
}

std::pair<int, int> early_stop_schedule(std::span<const double> val_losses, int patience) {
  int best_epoch = 0;
  double best = 0.0;
  int bad = 0;
  for (size_t i = 0; i < val_losses.size(); ++i) {
    const int epoch = static_cast<int>(i) + 1;
    if (best_epoch == 0 || val_losses[i] < best) {
      best = val_losses[i];
      best_epoch = epoch;
      bad = 0;
    } else {
      ++bad;
      if (bad >= patience) return {epoch, best_epoch};
    }
  }
  return {static_cast<int>(val_losses.size()), best_epoch};
}

namespace {

double masked_loss_only(const PolicyParams& params, std::span<const SftExample> traces,
                        std::span<const size_t> idx) {
  double loss = 0.0;
  long mask_total = 0;
  for (size_t i : idx) {
    const SftExample& ex = traces[i];
    const std::vector<double> lp = logprob(params, ex.obs, ex.tokens);
    for (size_t j = 0; j < ex.tokens.size(); ++j) {
      if (!ex.mask[j]) continue;
      loss -= lp[j];
      ++mask_total;
    }
  }
  if (mask_total == 0) throw std::invalid_argument("loss: all-zero mask");
  return loss / static_cast<double>(mask_total);
}

}  // namespace

SftResult train_sft(const SftConfig& cfg, std::span<const SftExample> traces) {
  if (traces.empty()) throw std::invalid_argument("train_sft: empty trace set");
  const int dim = static_cast<int>(traces[0].obs.features.size());

  Rng rng(cfg.seed);
  std::vector<size_t> order(traces.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const size_t val_n = std::max<size_t>(
      1, static_cast<size_t>(std::llround(cfg.val_fraction * static_cast<double>(traces.size()))));
  if (val_n >= traces.size()) throw std::invalid_argument("train_sft: nothing left to train on");
  std::vector<size_t> val_idx(order.begin(), order.begin() + static_cast<long>(val_n));
  std::vector<size_t> train_idx(order.begin() + static_cast<long>(val_n), order.end());

  PolicyParams params(dim);
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  long adam_t = 0;

  const long batches_per_epoch =
      (static_cast<long>(train_idx.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = batches_per_epoch * cfg.max_epochs;
  const long warmup_steps = std::max<long>(1, static_cast<long>(cfg.warmup_frac * static_cast<double>(total_steps)));
  auto lr_at = [&](long step) {
    if (step <= warmup_steps) {
      return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(std::max<long>(1, total_steps - warmup_steps));
    return 0.5 * cfg.learning_rate * (1.0 + std::cos(M_PI * std::min(1.0, progress)));
  };

  SftResult result{PolicyParams(dim), {}, 0, 0.0};
  std::vector<double> val_losses;
  std::vector<SftExample> batch;
  int bad = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(train_idx);
    double train_loss_sum = 0.0;
    double lr = cfg.learning_rate;
    for (long b = 0; b < batches_per_epoch; ++b) {
      batch.clear();
      const size_t begin = static_cast<size_t>(b) * cfg.batch_size;
      const size_t end = std::min(train_idx.size(), begin + cfg.batch_size);
      for (size_t k = begin; k < end; ++k) batch.push_back(traces[train_idx[k]]);
      auto [loss, grad] = sft_loss(params, batch);
      train_loss_sum += loss;

      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      const double norm = std::sqrt(norm2);
      if (norm > cfg.grad_clip && norm > 0.0) {
        const double scale = cfg.grad_clip / norm;
        for (double& g : grad) g *= scale;
      }

      ++adam_t;
      lr = lr_at(adam_t);
      const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
      std::vector<double>& w = params.flat();
      for (size_t k = 0; k < w.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
        v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        w[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + cfg.weight_decay * w[k]);
      }
    }

    const double val_loss = masked_loss_only(params, traces, val_idx);
    val_losses.push_back(val_loss);
    result.log.push_back({epoch, train_loss_sum / static_cast<double>(batches_per_epoch), val_loss, lr});

    if (result.best_epoch == 0 || val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      result.params = params;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::vector<double> compute_advantages(std::span<const double> rewards,
                                       Normalization mode, double std_floor) {
  if (rewards.size() < 2) throw std::invalid_argument("compute_advantages: need G >= 2");
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                      static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (mode == Normalization::kPerToken) {
    double var = 0.0;
    for (double a : adv) var += a * a;
    var /= static_cast<double>(rewards.size());
    const double denom = std::max(std::sqrt(var), std_floor);
    for (double& a : adv) a /= denom;
  }
  return adv;
}

std::vector<std::vector<double>> importance_ratios(const PolicyParams& params_new,
                                                   const GroupRollout& rollout) {
  std::vector<std::vector<double>> ratios;
  ratios.reserve(rollout.completions.size());
  for (const Completion& c : rollout.completions) {
    const std::vector<double> lp_new = logprob(params_new, rollout.obs, c.tokens);
    std::vector<double> r(c.tokens.size());
    for (size_t j = 0; j < c.tokens.size(); ++j) {
      r[j] = std::exp(lp_new[j] - c.logprobs[j]);
    }
    ratios.push_back(std::move(r));
  }
  return ratios;
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl: size mismatch");
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  }
  return kl;
}

double sequence_aggregate(std::span<const double> per_token_terms,
                          Normalization mode, int l_max) {
  const double sum = std::accumulate(per_token_terms.begin(), per_token_terms.end(), 0.0);
  if (mode == Normalization::kPerToken) {
    if (per_token_terms.empty()) return 0.0;
    return sum / static_cast<double>(per_token_terms.size());
  }
  return sum / static_cast<double>(l_max);
}

ObjectiveParts grpo_objective_parts(const PolicyParams& params,
                                    const PolicyParams& ref_params,
                                    std::span<const GroupRollout> rollouts,
                                    const GrpoConfig& cfg) {
  ObjectiveParts parts;
  parts.grad.assign(params.size(), 0.0);
  if (rollouts.empty()) return parts;

  const double lo = 1.0 - cfg.clip_low;
  const double hi = 1.0 + cfg.clip_high;
  const double group_coef = 1.0 / static_cast<double>(rollouts.size());

  std::vector<double> z(kV), p(kV), q(kV), dldz(kV);
  std::array<double, kV> bag{};

  for (const GroupRollout& g : rollouts) {
    const double coef_g = group_coef / static_cast<double>(g.completions.size());
    for (size_t i = 0; i < g.completions.size(); ++i) {
      const Completion& c = g.completions[i];
      if (c.tokens.empty()) continue;
      const double adv = g.advantages[i];
      const double seq_scale =
          cfg.normalization == Normalization::kPerToken
              ? 1.0 / static_cast<double>(c.tokens.size())
              : 1.0 / static_cast<double>(cfg.max_len);
      const double coef = coef_g * seq_scale;

      bag.fill(0.0);
      bag[tok::kBos] = 1.0;
      for (size_t j = 0; j < c.tokens.size(); ++j) {
        const int t = c.tokens[j];
        params.logits(g.obs, bag, z);
        p = z;
        softmax_from_logits(p);
        ref_params.logits(g.obs, bag, z);
        q = z;
        softmax_from_logits(q);

        const double lp_new = std::log(p[static_cast<size_t>(t)]);
        const double ratio = std::exp(lp_new - c.logprobs[j]);
        const double unclipped = ratio * adv;
        const double clipped = std::clamp(ratio, lo, hi) * adv;
        const double term = std::min(unclipped, clipped);
        parts.surrogate += coef * term;
        // The min picks the unclipped branch on ties, so the gradient flows
        // whenever the surrogate is not saturated by the clip.
        const double surr_w = (unclipped <= clipped) ? ratio * adv : 0.0;

        double kl_j = 0.0;
        for (int v = 0; v < kV; ++v) {
          if (p[static_cast<size_t>(v)] > 0.0) {
            kl_j += p[static_cast<size_t>(v)] *
                    std::log(p[static_cast<size_t>(v)] / std::max(q[static_cast<size_t>(v)], 1e-12));
          }
        }
        parts.kl += coef * kl_j;

        // dJ/dz = coef * [surr_w * (onehot - p) - beta * p .* (log(p/q) - kl)]
        for (int v = 0; v < kV; ++v) {
          const double pv = p[static_cast<size_t>(v)];
          double d = surr_w * ((v == t ? 1.0 : 0.0) - pv);
          if (cfg.kl_coef != 0.0 && pv > 0.0) {
            const double l = std::log(pv / std::max(q[static_cast<size_t>(v)], 1e-12));
            d -= cfg.kl_coef * pv * (l - kl_j);
          }
          dldz[static_cast<size_t>(v)] = coef * d;
        }
        accumulate_logit_grad(params, g.obs, bag, dldz, parts.grad);

        bag[static_cast<size_t>(t)] += 1.0;
      }
    }
  }
  parts.objective = parts.surrogate - cfg.kl_coef * parts.kl;
  return parts;
}

std::pair<double, std::vector<double>> grpo_objective(const PolicyParams& params,
                                                      const PolicyParams& ref_params,
                                                      std::span<const GroupRollout> rollouts,
                                                      const GrpoConfig& cfg) {
  ObjectiveParts parts = grpo_objective_parts(params, ref_params, rollouts, cfg);
  return {parts.objective, std::move(parts.grad)};
}

double kl_divergence(const PolicyParams& params, const PolicyParams& ref_params,
                     std::span<const GroupRollout> rollouts, const GrpoConfig& cfg) {
  GrpoConfig probe = cfg;
  probe.kl_coef = 1.0;  // value is aggregation-only; coefficient not applied here
  ObjectiveParts parts;
  // Reuse the objective walk with zeroed advantages so only the KL term runs.
  std::vector<GroupRollout> zeroed(rollouts.begin(), rollouts.end());
  for (GroupRollout& g : zeroed) {
    g.advantages.assign(g.completions.size(), 0.0);
  }
  parts = grpo_objective_parts(params, ref_params, zeroed, probe);
  return parts.kl;
}

GrpoResult train_grpo(const PolicyParams& sft_checkpoint,
                      std::span<const std::pair<Observation, LabelSet>> data,
                      const GrpoConfig& cfg, const RewardSetup& reward,
                      const GrpoHooks& hooks) {
  if (data.empty()) throw std::invalid_argument("train_grpo: empty dataset");
  PolicyParams params = sft_checkpoint;
  const PolicyParams& ref = sft_checkpoint;
  Rng rng(cfg.seed);
  CollapseMonitor monitor(reward.nuanced.window_size);
  const FormatSpec format{Dialect::kThinkSolution};
  GenerationConfig gen{cfg.max_len, cfg.temperature, cfg.top_p};

  GrpoResult result{params, {}};
  std::vector<GroupRollout> rollouts;
  for (int step = 1; step <= cfg.steps; ++step) {
    const PolicyParams old = params;  // rollout snapshot
    GrpoStepLog log{};
    log.step = step;

    rollouts.clear();
    for (int b = 0; b < cfg.batch_observations; ++b) {
      const auto& [obs, gold] = data[static_cast<size_t>(rng.below(data.size()))];
      GroupRollout g;
      g.obs = obs;
      for (int i = 0; i < cfg.group_size; ++i) {
        g.completions.push_back(sample_sequence(old, obs, gen, rng));
      }
      // Score in generation order so the collapse monitor sees the stream
      // exactly as it was produced.
      for (const Completion& c : g.completions) {
        ParsedOutput parsed = parse_completion(c.text, format);
        parsed.token_length = static_cast<int>(c.tokens.size());
        RewardBreakdown r;
        if (reward.custom) {
          r = reward.custom(parsed, c, gold);
        } else if (reward.kind == RewardKind::kHard) {
          r = hard_reward(parsed, gold, reward.hard);
        } else {
          r = nuanced_reward(parsed, gold, reward.stats, monitor, reward.nuanced);
        }
        g.rewards.push_back(r.total);
        log.reward_mean += r.total;
        log.component_means.match += r.match;
        log.component_means.partial += r.partial;
        log.component_means.fp += r.fp;
        log.component_means.collapse += r.collapse;
        log.component_means.format += r.format;
        log.component_means.length += r.length;
        log.completion_length_mean += static_cast<double>(c.tokens.size());
      }
      g.advantages = compute_advantages(g.rewards, cfg.normalization, cfg.advantage_std_floor);
      rollouts.push_back(std::move(g));
    }

    ObjectiveParts parts = grpo_objective_parts(params, ref, rollouts, cfg);
    std::vector<double>& w = params.flat();
    for (size_t k = 0; k < w.size(); ++k) w[k] += cfg.learning_rate * parts.grad[k];

    const double n_completions = static_cast<double>(cfg.batch_observations * cfg.group_size);
    log.reward_mean /= n_completions;
    log.component_means.match /= n_completions;
    log.component_means.partial /= n_completions;
    log.component_means.fp /= n_completions;
    log.component_means.collapse /= n_completions;
    log.component_means.format /= n_completions;
    log.component_means.length /= n_completions;
    log.component_means.finalize();
    log.completion_length_mean /= n_completions;
    log.kl = parts.kl;
    log.objective = parts.objective;

    double entropy_sum = 0.0;
    long token_total = 0;
    for (const GroupRollout& g : rollouts) {
      for (const Completion& c : g.completions) {
        entropy_sum += mean_token_entropy(old, g.obs, c.tokens) *
                       static_cast<double>(c.tokens.size());
        token_total += static_cast<long>(c.tokens.size());
      }
    }
    log.entropy = token_total > 0 ? entropy_sum / static_cast<double>(token_total) : 0.0;
    result.log.push_back(log);

    if (hooks.on_checkpoint && cfg.checkpoint_interval > 0 &&
        step % cfg.checkpoint_interval == 0) {
      hooks.on_checkpoint(step, params);
    }
  }
  result.params = params;
  return result;
}

}  // namespace chexlab
