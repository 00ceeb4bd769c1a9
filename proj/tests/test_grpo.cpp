#include <cmath>
#include <numeric>

#include "doctest.h"

#include "chexlab/grpo.hpp"

using namespace chexlab;

namespace {

Observation random_obs(int dim, Rng& rng) {
  Observation obs;
  for (int i = 0; i < dim; ++i) obs.features.push_back(rng.uniform());
  return obs;
}

std::vector<int> random_tokens(int len, Rng& rng) {
  std::vector<int> toks;
  for (int i = 0; i < len; ++i) toks.push_back(static_cast<int>(rng.below(tok::kVocabSize)));
  return toks;
}

// Rollouts drawn from `old_params`, with advantages supplied by the caller.
GroupRollout make_rollout(const PolicyParams& old_params, const Observation& obs,
                          const std::vector<std::vector<int>>& sequences,
                          const std::vector<double>& advantages) {
  GroupRollout g;
  g.obs = obs;
  for (const auto& seq : sequences) {
    Completion c;
    c.tokens = seq;
    c.logprobs = logprob(old_params, obs, seq);
    g.completions.push_back(std::move(c));
  }
  g.rewards.assign(sequences.size(), 0.0);
  g.advantages = advantages;
  return g;
}

double objective_value(const PolicyParams& params, const PolicyParams& ref,
                       std::span<const GroupRollout> rollouts, const GrpoConfig& cfg) {
  return grpo_objective(params, ref, rollouts, cfg).first;
}

}  // namespace

TEST_CASE("sft_loss on the uniform policy is ln V per masked token") {
  const int dim = 16;
  const PolicyParams params(dim);  // all-zero weights => uniform softmax
  Rng rng(3);
  std::vector<SftExample> batch;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(make_sft_example(random_obs(dim, rng),
                                     LabelSet::of({i, i + 1})));
  }
  const auto [loss, grad] = sft_loss(params, batch);
  CHECK(loss == doctest::Approx(std::log(25.0)).epsilon(1e-12));
  CHECK(grad.size() == params.size());
}

TEST_CASE("sft_loss is ~0 when the policy already pins every teacher token") {
  // Saturate the context weights to force the oracle sequence deterministically.
  const int dim = 14;
  Rng rng(8);
  const Observation obs = random_obs(dim, rng);
  const LabelSet y = LabelSet::of({3});
  SftExample ex = make_sft_example(obs, y);

  PolicyParams params(dim);
  // brute force: at each step, add a huge bias toward the needed token based
  // on the exact previous-token count signature; a lookup keyed by the bag is
  // not linear in general, so use a sequence-specific construction instead:
  // token t_j gets weight on the count of tokens emitted so far (j).
  // Position j is identified through the total bag mass, which grows by one
  // per step; wire each target token to prefer exactly that mass via BOS.
  // Simpler: single-token teacher sequences.
  ex.tokens = {tok::kThinkOpen};
  ex.mask = {1};
  const size_t bias_off = static_cast<size_t>(tok::kVocabSize * dim + tok::kVocabSize * tok::kVocabSize);
  params.flat()[bias_off + tok::kThinkOpen] = 80.0;
  const auto [loss, grad] = sft_loss(params, std::vector<SftExample>{ex});
  CHECK(loss <= 1e-12);
}

TEST_CASE("sft_loss rejects an all-zero mask") {
  Rng rng(4);
  SftExample ex = make_sft_example(random_obs(16, rng), LabelSet::of({0}));
  ex.mask.assign(ex.tokens.size(), 0);
  CHECK_THROWS_AS(sft_loss(PolicyParams(16), std::vector<SftExample>{ex}),
                  std::invalid_argument);
}

TEST_CASE("sft_loss gradient agrees with central finite differences") {
  Rng rng(1234);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = 14;
    PolicyParams params = PolicyParams::random(dim, rng.next_u64(), 0.4);
    std::vector<SftExample> batch;
    for (int i = 0; i < 2; ++i) {
      LabelSet y;
      while (y.empty()) y = LabelSet::from_bits(static_cast<uint16_t>(rng.below(1 << 14)));
      SftExample ex = make_sft_example(random_obs(dim, rng), y);
      if (rng.uniform() < 0.5) ex.mask[0] = 0;  // partially masked prompt token
      batch.push_back(std::move(ex));
    }
    const auto [loss, grad] = sft_loss(params, batch);
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < params.size(); ++k) {
      const double w0 = params.flat()[k];
      params.flat()[k] = w0 + h;
      const double up = sft_loss(params, batch).first;
      params.flat()[k] = w0 - h;
      const double down = sft_loss(params, batch).first;
      params.flat()[k] = w0;
      const double fd = (up - down) / (2.0 * h);
      num += (grad[k] - fd) * (grad[k] - fd);
      den += fd * fd;
    }
    REQUIRE(std::sqrt(num) / std::max(std::sqrt(den), 1e-12) <= 1e-4);
  }
}

TEST_CASE("early stopping: patience-2 rule on a synthetic loss sequence") {
  const std::vector<double> losses = {1.0, 0.9, 0.91, 0.92};
  const auto [stop_epoch, best_epoch] = early_stop_schedule(losses, 2);
  CHECK(stop_epoch == 4);
  CHECK(best_epoch == 2);

  const auto [s2, b2] = early_stop_schedule(std::vector<double>{1.0, 0.5, 0.4}, 2);
  CHECK(s2 == 3);
  CHECK(b2 == 3);
}

TEST_CASE("train_sft learns the toy traces and is deterministic") {
  const TaskInstance task = gen_task(300, 16, 2024);
  std::vector<SftExample> traces;
  for (const auto& [obs, y] : task.examples) traces.push_back(make_sft_example(obs, y));
  SftConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 11;
  const SftResult a = train_sft(cfg, traces);
  CHECK(a.best_val_loss < std::log(25.0));
  CHECK(!a.log.empty());

  const SftResult b = train_sft(cfg, traces);
  REQUIRE(a.params.flat() == b.params.flat());
  CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("advantages: centering and normalization modes") {
  SUBCASE("constant rewards vanish in both modes") {
    const std::vector<double> r = {1.0, 1.0, 1.0, 1.0};
    for (auto mode : {Normalization::kPerToken, Normalization::kDrGrpo}) {
      for (double a : compute_advantages(r, mode, 1e-6)) CHECK(a == doctest::Approx(0.0));
    }
  }
  SUBCASE("per-token divides by the group std") {
    const auto adv = compute_advantages(std::vector<double>{0.0, 1.0}, Normalization::kPerToken, 1e-6);
    CHECK(adv[0] == doctest::Approx(-1.0));
    CHECK(adv[1] == doctest::Approx(1.0));
  }
  SUBCASE("drgrpo only centers") {
    const auto adv = compute_advantages(std::vector<double>{0.0, 1.0}, Normalization::kDrGrpo, 1e-6);
    CHECK(adv[0] == doctest::Approx(-0.5));
    CHECK(adv[1] == doctest::Approx(0.5));
  }
  SUBCASE("advantages always sum to zero") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> r;
      const int g = 2 + static_cast<int>(rng.below(6));
      double max_abs = 0.0;
      for (int i = 0; i < g; ++i) {
        r.push_back(rng.uniform(-100.0, 100.0));
        max_abs = std::max(max_abs, std::abs(r.back()));
      }
      for (auto mode : {Normalization::kPerToken, Normalization::kDrGrpo}) {
        const auto adv = compute_advantages(r, mode, 1e-6);
        const double total = std::accumulate(adv.begin(), adv.end(), 0.0);
        REQUIRE(std::abs(total) <= 1e-9 * static_cast<double>(g) * std::max(1.0, max_abs));
      }
    }
  }
}

TEST_CASE("importance ratios are exactly 1 at the old policy and positive in general") {
  Rng rng(88);
  const int dim = 14;
  const PolicyParams old_params = PolicyParams::random(dim, 1, 0.5);
  const Observation obs = random_obs(dim, rng);
  const GroupRollout g = make_rollout(old_params, obs,
                                      {random_tokens(6, rng), random_tokens(4, rng)},
                                      {0.0, 0.0});

  const auto same = importance_ratios(old_params, g);
  for (const auto& seq : same) {
    for (double r : seq) CHECK(r == 1.0);
  }

  const PolicyParams perturbed = PolicyParams::random(dim, 2, 0.5);
  const auto moved = importance_ratios(perturbed, g);
  for (const auto& seq : moved) {
    for (double r : moved[0]) {
      CHECK(r > 0.0);
      CHECK(std::isfinite(r));
    }
  }
}

TEST_CASE("importance ratios agree with direct probability quotients") {
  Rng rng(321);
  const int dim = 10;
  for (int trial = 0; trial < 100; ++trial) {
    const PolicyParams old_params = PolicyParams::random(dim, rng.next_u64(), 0.5);
    const PolicyParams new_params = PolicyParams::random(dim, rng.next_u64(), 0.5);
    const Observation obs = random_obs(dim, rng);
    const std::vector<int> seq = random_tokens(1 + static_cast<int>(rng.below(6)), rng);
    const GroupRollout g = make_rollout(old_params, obs, {seq, seq}, {0.0, 0.0});
    const auto ratios = importance_ratios(new_params, g);
    const auto lp_new = logprob(new_params, obs, seq);
    const auto lp_old = logprob(old_params, obs, seq);
    for (size_t j = 0; j < seq.size(); ++j) {
      const double direct = std::exp(lp_new[j]) / std::exp(lp_old[j]);
      REQUIRE(ratios[0][j] == doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("kl_categorical: hand case, identity, and Gibbs positivity") {
  CHECK(kl_categorical(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(0.0));
  const double hand = 0.5 * std::log(5.0 / 9.0) + 0.5 * std::log(5.0);
  CHECK(kl_categorical(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1}) ==
        doctest::Approx(hand).epsilon(1e-12));
  CHECK(hand == doctest::Approx(0.5108).epsilon(1e-3));

  Rng rng(19);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(8));
    std::vector<double> p(static_cast<size_t>(n)), q(static_cast<size_t>(n));
    double ps = 0.0, qs = 0.0;
    for (int i = 0; i < n; ++i) {
      p[static_cast<size_t>(i)] = rng.uniform() + 1e-6;
      q[static_cast<size_t>(i)] = rng.uniform() + 1e-6;
      ps += p[static_cast<size_t>(i)];
      qs += q[static_cast<size_t>(i)];
    }
    for (int i = 0; i < n; ++i) {
      p[static_cast<size_t>(i)] /= ps;
      q[static_cast<size_t>(i)] /= qs;
    }
    REQUIRE(kl_categorical(p, q) >= 0.0);
    REQUIRE(kl_categorical(p, p) == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("kl_divergence over rollouts: zero iff identical, nonnegative otherwise") {
  Rng rng(29);
  const int dim = 12;
  const PolicyParams a = PolicyParams::random(dim, 100, 0.5);
  const PolicyParams b = PolicyParams::random(dim, 200, 0.5);
  const Observation obs = random_obs(dim, rng);
  GrpoConfig cfg;
  const GroupRollout g = make_rollout(a, obs, {random_tokens(6, rng), random_tokens(5, rng)},
                                      {0.0, 0.0});
  const std::vector<GroupRollout> rollouts = {g};
  CHECK(kl_divergence(a, a, rollouts, cfg) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(kl_divergence(a, b, rollouts, cfg) > 0.0);
}

TEST_CASE("sequence aggregation: Dr.GRPO does not rescale with appended zero terms") {
  const std::vector<double> base = {0.4, -0.2, 0.3};
  std::vector<double> padded = base;
  padded.push_back(0.0);
  padded.push_back(0.0);
  CHECK(sequence_aggregate(base, Normalization::kDrGrpo, 40) ==
        doctest::Approx(sequence_aggregate(padded, Normalization::kDrGrpo, 40)).epsilon(1e-15));
  CHECK(sequence_aggregate(base, Normalization::kPerToken, 40) !=
        doctest::Approx(sequence_aggregate(padded, Normalization::kPerToken, 40)));
}

TEST_CASE("grpo objective: zero advantages leave only the KL term") {
  Rng rng(7);
  const int dim = 12;
  const PolicyParams params = PolicyParams::random(dim, 5, 0.5);
  const PolicyParams ref = PolicyParams::random(dim, 6, 0.5);
  const Observation obs = random_obs(dim, rng);
  GrpoConfig cfg;
  const GroupRollout g = make_rollout(params, obs,
                                      {random_tokens(5, rng), random_tokens(7, rng)},
                                      {0.0, 0.0});
  const std::vector<GroupRollout> rollouts = {g};
  const ObjectiveParts parts = grpo_objective_parts(params, ref, rollouts, cfg);
  CHECK(parts.surrogate == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(parts.objective ==
        doctest::Approx(-cfg.kl_coef * kl_divergence(params, ref, rollouts, cfg)).epsilon(1e-12));
}

TEST_CASE("grpo objective: single-token clip arithmetic") {
  // ratio 1.5, advantage 1, bounds [0.85, 1.22] -> min(1.5, 1.22) = 1.22
  const int dim = 4;
  PolicyParams old_params(dim);
  PolicyParams new_params(dim);
  // bias shifts produce an exact ratio: softmax over two forced tokens
  Observation obs;
  obs.features.assign(static_cast<size_t>(dim), 0.0);

  GroupRollout g;
  g.obs = obs;
  Completion c;
  c.tokens = {tok::kThinkOpen};
  c.logprobs = logprob(old_params, obs, c.tokens);
  // engineer log pi_new = log pi_old + ln(1.5) via a bias bump and a uniform
  // correction is messy; instead fake the stored old log-prob:
  c.logprobs[0] = logprob(new_params, obs, c.tokens)[0] - std::log(1.5);
  g.completions.push_back(c);
  g.rewards = {0.0};
  g.advantages = {1.0};

  GrpoConfig cfg;
  cfg.kl_coef = 0.0;
  cfg.clip_low = 0.15;
  cfg.clip_high = 0.22;
  cfg.normalization = Normalization::kPerToken;  // sequence scale 1 for a 1-token sequence
  const std::vector<GroupRollout> rollouts = {g};
  const ObjectiveParts parts = grpo_objective_parts(new_params, new_params, rollouts, cfg);
  CHECK(parts.surrogate == doctest::Approx(1.22).epsilon(1e-12));

  // and the gradient is zero: the clipped branch is active
  for (double gr : parts.grad) CHECK(gr == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("at the old policy the clipped-surrogate gradient is REINFORCE with baseline") {
  Rng rng(99);
  const int dim = 12;
  const PolicyParams params = PolicyParams::random(dim, 31, 0.5);
  const Observation obs = random_obs(dim, rng);

  std::vector<std::vector<int>> seqs = {random_tokens(6, rng), random_tokens(4, rng),
                                        random_tokens(5, rng), random_tokens(7, rng)};
  GroupRollout g = make_rollout(params, obs, seqs, {});
  g.rewards = {1.0, -0.5, 0.25, 2.0};
  g.advantages = compute_advantages(g.rewards, Normalization::kDrGrpo, 1e-6);

  GrpoConfig cfg;
  cfg.kl_coef = 0.0;  // isolate the surrogate
  const std::vector<GroupRollout> rollouts = {g};
  const ObjectiveParts parts = grpo_objective_parts(params, params, rollouts, cfg);

  // REINFORCE with baseline: sum_i scale * A_i * grad log pi(t_i)
  std::vector<double> expected(params.size(), 0.0);
  for (size_t i = 0; i < seqs.size(); ++i) {
    const double coef = (1.0 / static_cast<double>(seqs.size())) / cfg.max_len * g.advantages[i];
    std::vector<double> weights(seqs[i].size(), coef);
    add_weighted_logprob_grad(params, obs, seqs[i], weights, expected);
  }
  REQUIRE(parts.grad.size() == expected.size());
  for (size_t k = 0; k < expected.size(); ++k) {
    REQUIRE(parts.grad[k] == doctest::Approx(expected[k]).epsilon(1e-10));
  }
}

TEST_CASE("adding a constant to every reward leaves the surrogate unchanged") {
  Rng rng(101);
  const int dim = 10;
  const PolicyParams old_params = PolicyParams::random(dim, 41, 0.5);
  const PolicyParams new_params = PolicyParams::random(dim, 42, 0.5);
  const Observation obs = random_obs(dim, rng);
  std::vector<std::vector<int>> seqs = {random_tokens(5, rng), random_tokens(6, rng),
                                        random_tokens(4, rng)};
  GrpoConfig cfg;
  cfg.kl_coef = 0.0;

  for (auto mode : {Normalization::kPerToken, Normalization::kDrGrpo}) {
    cfg.normalization = mode;
    GroupRollout g = make_rollout(old_params, obs, seqs, {});
    g.rewards = {0.3, -1.0, 2.0};
    g.advantages = compute_advantages(g.rewards, mode, 1e-6);
    const double before =
        objective_value(new_params, old_params, std::vector<GroupRollout>{g}, cfg);

    GroupRollout shifted = make_rollout(old_params, obs, seqs, {});
    shifted.rewards = {0.3 + 17.0, -1.0 + 17.0, 2.0 + 17.0};
    shifted.advantages = compute_advantages(shifted.rewards, mode, 1e-6);
    const double after =
        objective_value(new_params, old_params, std::vector<GroupRollout>{shifted}, cfg);
    CHECK(before == doctest::Approx(after).epsilon(1e-12));
  }
}

TEST_CASE("grpo objective gradient agrees with finite differences away from kinks") {
  Rng rng(777);
  const double h = 1e-5;
  int accepted = 0;
  while (accepted < 20) {
    const int dim = 8;
    const PolicyParams old_params = PolicyParams::random(dim, rng.next_u64(), 0.35);
    PolicyParams params = old_params;
    // small perturbation keeps ratios near 1 but not exactly 1
    {
      Rng prng(rng.next_u64());
      for (double& w : params.flat()) w += 0.02 * prng.gauss();
    }
    const Observation obs = random_obs(dim, rng);
    GrpoConfig cfg;
    cfg.normalization = (accepted % 2 == 0) ? Normalization::kDrGrpo : Normalization::kPerToken;

    std::vector<std::vector<int>> seqs;
    for (int i = 0; i < 4; ++i) seqs.push_back(random_tokens(3 + static_cast<int>(rng.below(4)), rng));
    GroupRollout g = make_rollout(old_params, obs, seqs, {});
    g.rewards = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                 rng.uniform(-1.0, 1.0)};
    g.advantages = compute_advantages(g.rewards, cfg.normalization, 1e-6);
    const std::vector<GroupRollout> rollouts = {g};

    // kink avoidance: every ratio must sit a margin away from the clip bounds
    bool near_kink = false;
    const auto ratios = importance_ratios(params, g);
    for (const auto& seq : ratios) {
      for (double r : seq) {
        if (std::abs(r - (1.0 - cfg.clip_low)) < 1e-3 ||
            std::abs(r - (1.0 + cfg.clip_high)) < 1e-3) {
          near_kink = true;
        }
      }
    }
    if (near_kink) continue;
    ++accepted;

    const auto [value, grad] = grpo_objective(params, old_params, rollouts, cfg);
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < params.size(); ++k) {
      const double w0 = params.flat()[k];
      params.flat()[k] = w0 + h;
      const double up = objective_value(params, old_params, rollouts, cfg);
      params.flat()[k] = w0 - h;
      const double down = objective_value(params, old_params, rollouts, cfg);
      params.flat()[k] = w0;
      const double fd = (up - down) / (2.0 * h);
      num += (grad[k] - fd) * (grad[k] - fd);
      den += fd * fd;
    }
    REQUIRE(std::sqrt(num) / std::max(std::sqrt(den), 1e-12) <= 1e-3);
  }
}

TEST_CASE("train_grpo runs, logs, and stays deterministic") {
  const TaskInstance task = gen_task(64, 16, 5);
  std::vector<std::pair<Observation, LabelSet>> data(task.examples.begin(), task.examples.end());

  SftConfig sft_cfg;
  sft_cfg.max_epochs = 2;
  std::vector<SftExample> traces;
  for (const auto& [obs, y] : data) traces.push_back(make_sft_example(obs, y));
  const SftResult sft = train_sft(sft_cfg, traces);

  GrpoConfig cfg;
  cfg.steps = 5;
  cfg.batch_observations = 4;
  cfg.seed = 77;
  RewardSetup reward;
  reward.kind = RewardKind::kHard;
  reward.hard.min_length_tokens = 20;

  int checkpoints = 0;
  GrpoHooks hooks;
  hooks.on_checkpoint = [&](int, const PolicyParams&) { ++checkpoints; };
  GrpoConfig cfg_ckpt = cfg;
  cfg_ckpt.checkpoint_interval = 2;

  const GrpoResult a = train_grpo(sft.params, data, cfg_ckpt, reward, hooks);
  CHECK(a.log.size() == 5);
  CHECK(checkpoints == 2);
  for (const GrpoStepLog& s : a.log) {
    CHECK(s.completion_length_mean > 0.0);
    CHECK(s.entropy >= 0.0);
    CHECK(s.kl >= -1e-12);
    CHECK(std::isfinite(s.reward_mean));
  }

  const GrpoResult b = train_grpo(sft.params, data, cfg_ckpt, reward, GrpoHooks{});
  REQUIRE(a.params.flat() == b.params.flat());
}

TEST_CASE("nuanced reward path drives the collapse monitor in generation order") {
  const TaskInstance task = gen_task(32, 16, 6);
  std::vector<std::pair<Observation, LabelSet>> data(task.examples.begin(), task.examples.end());
  std::vector<LabelSet> golds;
  for (const auto& [obs, y] : data) golds.push_back(y);

  GrpoConfig cfg;
  cfg.steps = 3;
  cfg.batch_observations = 2;
  cfg.reward = RewardKind::kNuanced;
  RewardSetup reward;
  reward.kind = RewardKind::kNuanced;
  reward.stats = label_stats(golds);
  const GrpoResult result = train_grpo(PolicyParams::random(16, 1, 0.2), data, cfg, reward);
  CHECK(result.log.size() == 3);
}
