#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chexlab/labels.hpp"

#include "json.hpp"

namespace chexlab {

struct PoolItem {
  std::string id;
  LabelSet labels;               // non-empty by contract
  nlohmann::json payload;        // opaque, passed through
};

struct SamplePlan {
  int n = 0;
  double min_fraction = 0.05;
  double overrepresentation_penalty = 2.0;
  uint64_t seed = 0;
};

// Greedy candidate score: the sum over the item's labels of the remaining
// deficit toward ceil(min_fraction * n), with overshoot penalized at
// -penalty * surplus.
double score_candidate(const PoolItem& item,
                       const std::array<int, kNumLabels>& selected_counts,
                       int n, const SamplePlan& plan);

struct SampleResult {
  std::vector<PoolItem> items;
  std::array<int, kNumLabels> coverage{};   // per-label counts in the selection
  std::vector<std::string> warnings;        // per-label feasibility shortfalls
  struct TraceEntry {
    std::string id;
    double score;
  };
  std::vector<TraceEntry> trace;            // selection order, for auditing
};

// Penalty-based greedy iterative selection of plan.n items. Ties are broken
// by a seeded pre-shuffle of the pool. When the pool can cover every label at
// ceil(min_fraction * n) occurrences, the selection does too; otherwise the
// shortfall is reported in warnings. Throws if the pool is smaller than n.
SampleResult balanced_sample(std::span<const PoolItem> pool, const SamplePlan& plan);

// Two disjoint balanced samples: the SFT set is drawn first and removed from
// the pool before the RL set is drawn. Throws if n_sft + n_rl exceeds the
// pool.
std::pair<SampleResult, SampleResult> split_disjoint(std::span<const PoolItem> pool,
                                                     int n_sft, int n_rl,
                                                     const SamplePlan& plan);

}  // namespace chexlab
