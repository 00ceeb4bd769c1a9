#pragma once

#include <array>
#include <deque>

#include "chexlab/labels.hpp"
#include "chexlab/parser.hpp"

namespace chexlab {

struct HardRewardConfig {
  int min_length_tokens = 250;
  double length_penalty = 0.2;  // lambda_len, applied below min_length_tokens
};

struct NuancedRewardConfig {
  double exact_match_bonus = 100.0;
  double recall_scale = 30.0;
  double precision_scale = 20.0;
  double invalid_label_penalty = 100.0;
  double duplicate_penalty = 25.0;
  double collapse_penalty = 50.0;
  double excess_repetition_penalty = 30.0;
  double dominance_threshold = 0.70;
  int window_size = 100;
  double fp_base_penalty = 10.0;
  double format_penalty = 100.0;
  double extraneous_penalty = 10.0;
};

// Signed reward components; total is always their plain sum. Penalty
// components are stored negative.
struct RewardBreakdown {
  double total = 0.0;
  double match = 0.0;
  double partial = 0.0;
  double fp = 0.0;
  double collapse = 0.0;
  double format = 0.0;
  double length = 0.0;

  void finalize() { total = match + partial + fp + collapse + format + length; }
};

// |A∩B| / |A∪B|; both empty -> 1.0.
double jaccard(LabelSet a, LabelSet b);

// Format-gated Jaccard: 0 on invalid format, J on valid, J - lambda_len when
// the completion is shorter than min_length_tokens.
RewardBreakdown hard_reward(const ParsedOutput& parsed, LabelSet gold,
                            const HardRewardConfig& cfg);

// Sliding window over the most recent predictions, used to detect a single
// label dominating the output distribution.
class CollapseMonitor {
 public:
  explicit CollapseMonitor(int window_size);

  // Scores the dominance penalty against the window *before* appending the
  // new prediction, then appends it (evicting the oldest entry at capacity).
  // Returns the penalty magnitude (>= 0). Single-writer: observations must
  // arrive in generation order.
  double observe(LabelSet predicted, const NuancedRewardConfig& cfg);

  int window_length() const { return static_cast<int>(window_.size()); }
  int capacity() const { return capacity_; }
  int count(int label_id) const { return counts_[static_cast<size_t>(label_id)]; }

 private:
  int capacity_;
  std::deque<LabelSet> window_;
  std::array<int, kNumLabels> counts_{};
};

// Multi-component reward: exact-match bonus, recall/precision partial credit,
// prevalence-weighted false-positive penalties, dominance penalty from the
// monitor, and format penalties. The monitor must already contain all
// strictly earlier predictions; this call appends parsed.predicted.
RewardBreakdown nuanced_reward(const ParsedOutput& parsed, LabelSet gold,
                               const LabelStats& stats, CollapseMonitor& monitor,
                               const NuancedRewardConfig& cfg);

// Smallest integer k with k >= fraction * n, robust to the usual binary
// representation error of fractions like 0.7 and 0.05.
int ceil_fraction(double fraction, int n);

}  // namespace chexlab
