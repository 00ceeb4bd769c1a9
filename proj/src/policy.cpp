#include "chexlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace chexlab {

namespace tok {

std::string_view token_text(int t) {
  static const std::array<std::string, kVocabSize> table = [] {
    std::array<std::string, kVocabSize> tt;
    tt[kBos] = "";
    tt[kEos] = "";
    tt[kThinkOpen] = "<think>";
    tt[kThinkClose] = "</think>";
    tt[kSolOpen] = "<solution>";
    tt[kSolClose] = "</solution>";
    tt[kComma] = ",";
    for (const Label& l : canonical_labels()) {
      tt[static_cast<size_t>(label_token(l.id))] = std::string(l.name);
    }
    tt[kFillerBase + 0] = "lungs";
    tt[kFillerBase + 1] = "heart";
    tt[kFillerBase + 2] = "borders";
    tt[kFillerBase + 3] = "clear";
    return tt;
  }();
  return table[static_cast<size_t>(t)];
}

namespace {
bool is_word(int t) { return t >= kLabelBase && t < kVocabSize; }
}  // namespace

std::string render_tokens(std::span<const int> tokens) {
  std::string out;
  int prev = kBos;
  for (int t : tokens) {
    if (t == kBos || t == kEos) continue;
    if (is_word(prev) && is_word(t)) out += ' ';
    if (t == kComma) {
      out += ',';
    } else {
      if (prev == kComma) out += ' ';
      out += token_text(t);
    }
    prev = t;
  }
  return out;
}

}  // namespace tok

namespace {

constexpr int kV = tok::kVocabSize;

void softmax_inplace(std::span<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

std::array<double, kV> bag_of(std::span<const int> prefix) {
  std::array<double, kV> bag{};
  bag[tok::kBos] += 1.0;  // the implicit sequence start
  for (int t : prefix) {
    if (t < 0 || t >= kV) throw std::out_of_range("token id out of range");
    bag[static_cast<size_t>(t)] += 1.0;
  }
  return bag;
}

}  // namespace

PolicyParams::PolicyParams(int dim)
    : dim_(dim),
      flat_(static_cast<size_t>(kV * dim + kV * kV + kV), 0.0) {
  if (dim < 1) throw std::invalid_argument("PolicyParams: dim must be >= 1");
}

PolicyParams PolicyParams::random(int dim, uint64_t seed, double scale) {
  PolicyParams p(dim);
  Rng rng(seed);
  for (double& w : p.flat_) w = scale * rng.gauss();
  return p;
}

void PolicyParams::logits(const Observation& obs, std::span<const double> bag,
                          std::span<double> out) const {
  if (static_cast<int>(obs.features.size()) != dim_) {
    throw std::invalid_argument("logits: feature dimension mismatch");
  }
  const double* wf = flat_.data();
  const double* wc = flat_.data() + static_cast<size_t>(kV) * dim_;
  const double* b = wc + static_cast<size_t>(kV) * kV;
  for (int v = 0; v < kV; ++v) {
    double z = b[v];
    const double* wfr = wf + static_cast<size_t>(v) * dim_;
    for (int i = 0; i < dim_; ++i) z += wfr[i] * obs.features[static_cast<size_t>(i)];
    const double* wcr = wc + static_cast<size_t>(v) * kV;
    for (int u = 0; u < kV; ++u) z += wcr[u] * bag[static_cast<size_t>(u)];
    out[static_cast<size_t>(v)] = z;
  }
}

void PolicyParams::save(const std::string& path, uint64_t seed) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << "chexlab-policy 1\n" << dim_ << " " << kV << " " << seed << "\n";
  char buf[64];
  for (double w : flat_) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", w);
    out << buf;
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

PolicyParams PolicyParams::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "chexlab-policy" || version != 1) {
    throw std::runtime_error("unrecognized checkpoint header: " + path);
  }
  int dim = 0, vocab = 0;
  uint64_t seed = 0;
  in >> dim >> vocab >> seed;
  if (vocab != kV) throw std::runtime_error("checkpoint vocab size mismatch");
  PolicyParams p(dim);
  for (double& w : p.flat_) {
    if (!(in >> w)) throw std::runtime_error("truncated checkpoint: " + path);
  }
  return p;
}

std::vector<double> token_distribution(const PolicyParams& params, const Observation& obs,
                                       std::span<const int> prefix, double temperature,
                                       double top_p) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be > 0");
  if (top_p <= 0.0 || top_p > 1.0) throw std::invalid_argument("top_p must be in (0,1]");
  const auto bag = bag_of(prefix);
  std::vector<double> probs(kV);
  params.logits(obs, bag, probs);
  for (double& z : probs) z /= temperature;
  softmax_inplace(probs);
  if (top_p >= 1.0) return probs;

  // Nucleus: keep the smallest descending-probability prefix with mass >= top_p.
  std::array<int, kV> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[static_cast<size_t>(a)] > probs[static_cast<size_t>(b)]; });
  double mass = 0.0;
  std::vector<double> out(kV, 0.0);
  for (int v : order) {
    out[static_cast<size_t>(v)] = probs[static_cast<size_t>(v)];
    mass += probs[static_cast<size_t>(v)];
    if (mass >= top_p - 1e-15) break;
  }
  for (double& p : out) p /= mass;
  return out;
}

Completion sample_sequence(const PolicyParams& params, const Observation& obs,
                           const GenerationConfig& gen, Rng& rng) {
  if (gen.max_len < 2) throw std::invalid_argument("max_len must be >= 2");
  Completion c;
  std::array<double, kV> bag{};
  bag[tok::kBos] = 1.0;
  std::vector<double> z(kV), full(kV);
  for (int step = 0; step < gen.max_len; ++step) {
    params.logits(obs, bag, z);
    full = z;
    softmax_inplace(full);  // temperature-1 policy, for the recorded log-probs

    int t;
    if (gen.temperature <= 0.0) {
      t = static_cast<int>(std::max_element(full.begin(), full.end()) - full.begin());
    } else {
      std::vector<double> proposal(kV);
      for (int v = 0; v < kV; ++v) proposal[static_cast<size_t>(v)] = z[static_cast<size_t>(v)] / gen.temperature;
      softmax_inplace(proposal);
      if (gen.top_p < 1.0) {
        std::array<int, kV> order;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
          return proposal[static_cast<size_t>(a)] > proposal[static_cast<size_t>(b)];
        });
        double mass = 0.0;
        std::vector<double> kept(kV, 0.0);
        for (int v : order) {
          kept[static_cast<size_t>(v)] = proposal[static_cast<size_t>(v)];
          mass += proposal[static_cast<size_t>(v)];
          if (mass >= gen.top_p - 1e-15) break;
        }
        for (double& p : kept) p /= mass;
        proposal = kept;
      }
      const double u = rng.uniform();
      double acc = 0.0;
      t = kV - 1;
      for (int v = 0; v < kV; ++v) {
        acc += proposal[static_cast<size_t>(v)];
        if (u < acc) {
          t = v;
          break;
        }
      }
    }
    c.tokens.push_back(t);
    c.logprobs.push_back(std::log(full[static_cast<size_t>(t)]));
    bag[static_cast<size_t>(t)] += 1.0;
    if (t == tok::kEos) break;
  }
  c.text = tok::render_tokens(c.tokens);
  return c;
}

std::vector<double> logprob(const PolicyParams& params, const Observation& obs,
                            std::span<const int> tokens) {
  if (tokens.empty()) throw std::invalid_argument("logprob: empty token sequence");
  std::array<double, kV> bag{};
  bag[tok::kBos] = 1.0;
  std::vector<double> z(kV), out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t < 0 || t >= kV) throw std::out_of_range("token id out of range");
    params.logits(obs, bag, z);
    softmax_inplace(z);
    out.push_back(std::log(z[static_cast<size_t>(t)]));
    bag[static_cast<size_t>(t)] += 1.0;
  }
  return out;
}

void add_weighted_logprob_grad(const PolicyParams& params, const Observation& obs,
                               std::span<const int> tokens,
                               std::span<const double> weights,
                               std::span<double> grad) {
  if (tokens.size() != weights.size()) {
    throw std::invalid_argument("grad: token/weight length mismatch");
  }
  const int dim = params.dim();
  std::array<double, kV> bag{};
  bag[tok::kBos] = 1.0;
  std::vector<double> p(kV);
  double* gwf = grad.data();
  double* gwc = grad.data() + static_cast<size_t>(kV) * dim;
  double* gb = gwc + static_cast<size_t>(kV) * kV;
  for (size_t j = 0; j < tokens.size(); ++j) {
    const int t = tokens[j];
    if (t < 0 || t >= kV) throw std::out_of_range("token id out of range");
    params.logits(obs, bag, p);
    softmax_inplace(p);
    const double w = weights[j];
    if (w != 0.0) {
      // d log pi(t) / d z_v = [v == t] - p_v, pushed through the linear maps.
      for (int v = 0; v < kV; ++v) {
        const double err = w * ((v == t ? 1.0 : 0.0) - p[static_cast<size_t>(v)]);
        if (err == 0.0) continue;
        double* gwfr = gwf + static_cast<size_t>(v) * dim;
        for (int i = 0; i < dim; ++i) gwfr[i] += err * obs.features[static_cast<size_t>(i)];
        double* gwcr = gwc + static_cast<size_t>(v) * kV;
        for (int u = 0; u < kV; ++u) gwcr[u] += err * bag[static_cast<size_t>(u)];
        gb[v] += err;
      }
    }
    bag[static_cast<size_t>(t)] += 1.0;
  }
}

std::vector<double> grad_logprob(const PolicyParams& params, const Observation& obs,
                                 std::span<const int> tokens) {
  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> weights(tokens.size(), 1.0);
  add_weighted_logprob_grad(params, obs, tokens, weights, grad);
  return grad;
}

double mean_token_entropy(const PolicyParams& params, const Observation& obs,
                          std::span<const int> tokens) {
  if (tokens.empty()) return 0.0;
  std::array<double, kV> bag{};
  bag[tok::kBos] = 1.0;
  std::vector<double> p(kV);
  double total = 0.0;
  for (int t : tokens) {
    params.logits(obs, bag, p);
    softmax_inplace(p);
    double h = 0.0;
    for (double q : p) {
      if (q > 0.0) h -= q * std::log(q);
    }
    total += h;
    bag[static_cast<size_t>(t)] += 1.0;
  }
  return total / static_cast<double>(tokens.size());
}

}  // namespace chexlab
