#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chexlab/rng.hpp"
#include "chexlab/toyenv.hpp"

namespace chexlab {

// Token alphabet of the toy policy: control tags, a comma, the 14 label
// tokens, and a few filler words for reasoning text.
namespace tok {
enum : int {
  kBos = 0,
  kEos = 1,
  kThinkOpen = 2,
  kThinkClose = 3,
  kSolOpen = 4,
  kSolClose = 5,
  kComma = 6,
  kLabelBase = 7,   // 7..20 map to label ids 0..13
  kFillerBase = 21, // 21..24
  kVocabSize = 25,
};

inline int label_token(int label_id) { return kLabelBase + label_id; }
inline bool is_label_token(int t) { return t >= kLabelBase && t < kFillerBase; }
inline int token_label_id(int t) { return t - kLabelBase; }

std::string_view token_text(int t);

// Concatenates token texts, inserting a space between adjacent word tokens
// (labels and fillers). BOS/EOS render empty.
std::string render_tokens(std::span<const int> tokens);
}  // namespace tok

// Linear-softmax autoregressive policy:
//   logits(obs, prefix) = Wf * features + Wc * bag(prefix) + b
// where bag() counts tokens emitted so far (the prefix always starts at BOS).
// The parameter vector is flat: Wf row-major (V x d), then Wc (V x V), then b.
class PolicyParams {
 public:
  explicit PolicyParams(int dim);
  static PolicyParams random(int dim, uint64_t seed, double scale = 0.1);

  int dim() const { return dim_; }
  static constexpr int vocab_size() { return tok::kVocabSize; }
  size_t size() const { return flat_.size(); }
  std::vector<double>& flat() { return flat_; }
  const std::vector<double>& flat() const { return flat_; }

  double wf(int v, int i) const { return flat_[static_cast<size_t>(v * dim_ + i)]; }
  double wc(int v, int u) const {
    return flat_[static_cast<size_t>(tok::kVocabSize * dim_ + v * tok::kVocabSize + u)];
  }
  double bias(int v) const {
    return flat_[static_cast<size_t>(tok::kVocabSize * dim_ + tok::kVocabSize * tok::kVocabSize + v)];
  }

  // out must have vocab_size() entries; bag is a count vector over the vocab.
  void logits(const Observation& obs, std::span<const double> bag,
              std::span<double> out) const;

  // Text checkpoint with a (d, V, version, seed) header; exact round-trip.
  void save(const std::string& path, uint64_t seed = 0) const;
  static PolicyParams load(const std::string& path);

 private:
  int dim_;
  std::vector<double> flat_;
};

struct GenerationConfig {
  int max_len = 40;
  double temperature = 0.8;  // 0 selects argmax decoding
  double top_p = 0.95;
};

struct Completion {
  std::vector<int> tokens;        // ends with EOS unless cut at max_len
  std::vector<double> logprobs;   // full-softmax log-probs under the sampler's policy
  std::string text;
};

// Sampling distribution: softmax(logits / temperature) truncated to the
// smallest probability-mass prefix >= top_p (descending order, ties by token
// id) and renormalized. top_p = 1 is the plain tempered softmax.
std::vector<double> token_distribution(const PolicyParams& params, const Observation& obs,
                                       std::span<const int> prefix, double temperature,
                                       double top_p);

// Autoregressive sampling until EOS or max_len. The recorded log-probs come
// from the untruncated temperature-1 softmax — the policy the importance
// ratios are defined over — not from the nucleus-truncated proposal.
Completion sample_sequence(const PolicyParams& params, const Observation& obs,
                           const GenerationConfig& gen, Rng& rng);

// Exact log full-softmax probability of each token given its prefix.
std::vector<double> logprob(const PolicyParams& params, const Observation& obs,
                            std::span<const int> tokens);

// Gradient of sum_j log pi(t_j | prefix_j) over the flat parameter vector.
std::vector<double> grad_logprob(const PolicyParams& params, const Observation& obs,
                                 std::span<const int> tokens);

// grad += sum_j weights[j] * grad log pi(t_j | prefix_j). The workhorse for
// the SFT and policy-gradient objectives.
void add_weighted_logprob_grad(const PolicyParams& params, const Observation& obs,
                               std::span<const int> tokens,
                               std::span<const double> weights,
                               std::span<double> grad);

// Mean entropy of the full softmax at each state visited by `tokens`.
double mean_token_entropy(const PolicyParams& params, const Observation& obs,
                          std::span<const int> tokens);

}  // namespace chexlab
