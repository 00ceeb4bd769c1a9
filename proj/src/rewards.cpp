#include "chexlab/rewards.hpp"

#include <cmath>
#include <stdexcept>

namespace chexlab {

double jaccard(LabelSet a, LabelSet b) {
  const int inter = (a & b).size();
  const int uni = (a | b).size();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

int ceil_fraction(double fraction, int n) {
  return static_cast<int>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

RewardBreakdown hard_reward(const ParsedOutput& parsed, LabelSet gold,
                            const HardRewardConfig& cfg) {
  RewardBreakdown r;
  if (!parsed.valid) {
    r.finalize();
    return r;
  }
  r.match = jaccard(gold, parsed.predicted);
  if (parsed.token_length < cfg.min_length_tokens) {
    r.length = -cfg.length_penalty;
  }
  r.finalize();
  return r;
}

CollapseMonitor::CollapseMonitor(int window_size) : capacity_(window_size) {
  if (window_size < 1) throw std::invalid_argument("window_size must be >= 1");
}

double CollapseMonitor::observe(LabelSet predicted, const NuancedRewardConfig& cfg) {
  double penalty = 0.0;
  const int len = window_length();
  if (len > 0) {
    int dominant = -1;
    int dominant_count = 0;
    for (int id = 0; id < kNumLabels; ++id) {
      if (counts_[static_cast<size_t>(id)] > dominant_count) {
        dominant_count = counts_[static_cast<size_t>(id)];
        dominant = id;
      }
    }
    if (dominant >= 0 &&
        static_cast<double>(dominant_count) / len > cfg.dominance_threshold) {
      const int threshold_count = ceil_fraction(cfg.dominance_threshold, len);
      penalty = cfg.collapse_penalty +
                cfg.excess_repetition_penalty * (dominant_count - threshold_count);
    }
  }
  window_.push_back(predicted);
  for (int id : predicted.ids()) ++counts_[static_cast<size_t>(id)];
  if (window_length() > capacity_) {
    for (int id : window_.front().ids()) --counts_[static_cast<size_t>(id)];
    window_.pop_front();
  }
  return penalty;
}

RewardBreakdown nuanced_reward(const ParsedOutput& parsed, LabelSet gold,
                               const LabelStats& stats, CollapseMonitor& monitor,
                               const NuancedRewardConfig& cfg) {
  RewardBreakdown r;
  const LabelSet predicted = parsed.predicted;

  if (parsed.valid && predicted == gold) {
    r.match = cfg.exact_match_bonus;
  } else if (parsed.valid) {
    const int inter = (gold & predicted).size();
    double partial = 0.0;
    if (gold.size() > 0) partial += cfg.recall_scale * inter / gold.size();
    if (predicted.size() > 0) partial += cfg.precision_scale * inter / predicted.size();
    r.partial = partial;
  }

  for (int id : (predicted - gold).ids()) {
    r.fp -= cfg.fp_base_penalty * (1.0 + stats.prevalence[static_cast<size_t>(id)]);
  }

  r.collapse = -monitor.observe(predicted, cfg);

  double format = 0.0;
  if (!parsed.valid) format += cfg.format_penalty;
  format += cfg.invalid_label_penalty * parsed.invalid_label_count;
  format += cfg.duplicate_penalty * parsed.duplicate_count;
  if (parsed.extraneous_text) format += cfg.extraneous_penalty;
  r.format = -format;

  r.finalize();
  return r;
}

}  // namespace chexlab
