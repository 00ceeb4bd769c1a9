#include "chexlab/sampler.hpp"

#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "chexlab/rewards.hpp"  // ceil_fraction
#include "chexlab/rng.hpp"

namespace chexlab {

double score_candidate(const PoolItem& item,
                       const std::array<int, kNumLabels>& selected_counts,
                       int n, const SamplePlan& plan) {
  const int target = ceil_fraction(plan.min_fraction, n);
  double score = 0.0;
  for (int id : item.labels.ids()) {
    const int deficit = target - selected_counts[static_cast<size_t>(id)];
    if (deficit > 0) {
      score += deficit;
    } else {
      score -= plan.overrepresentation_penalty * (-deficit);
    }
  }
  return score;
}

SampleResult balanced_sample(std::span<const PoolItem> pool, const SamplePlan& plan) {
  if (static_cast<int>(pool.size()) < plan.n) {
    throw std::invalid_argument("balanced_sample: pool smaller than requested n");
  }
  SampleResult result;
  const int target = ceil_fraction(plan.min_fraction, plan.n);

  // Feasibility: each label needs at least `target` bearers in the pool.
  std::array<int, kNumLabels> available{};
  for (const PoolItem& item : pool) {
    for (int id : item.labels.ids()) ++available[static_cast<size_t>(id)];
  }
  for (int id = 0; id < kNumLabels; ++id) {
    if (available[static_cast<size_t>(id)] < target) {
      result.warnings.push_back(
          std::string(canonical_labels()[static_cast<size_t>(id)].name) +
          ": pool has " + std::to_string(available[static_cast<size_t>(id)]) +
          " bearers, target " + std::to_string(target));
    }
  }

  // Seeded pre-shuffle fixes the tie-break order without biasing toward the
  // pool file's ordering.
  std::vector<int> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(plan.seed);
  rng.shuffle(order);

  std::array<int, kNumLabels> counts{};
  result.items.reserve(static_cast<size_t>(plan.n));
  for (int round = 0; round < plan.n; ++round) {
    int best_pos = -1;
    double best_score = 0.0;
    for (size_t pos = 0; pos < order.size(); ++pos) {
      const double s = score_candidate(pool[static_cast<size_t>(order[pos])], counts, plan.n, plan);
      if (best_pos < 0 || s > best_score) {
        best_pos = static_cast<int>(pos);
        best_score = s;
      }
    }
    const PoolItem& chosen = pool[static_cast<size_t>(order[static_cast<size_t>(best_pos)])];
    result.items.push_back(chosen);
    result.trace.push_back({chosen.id, best_score});
    for (int id : chosen.labels.ids()) ++counts[static_cast<size_t>(id)];
    order.erase(order.begin() + best_pos);
  }
  result.coverage = counts;
  return result;
}

std::pair<SampleResult, SampleResult> split_disjoint(std::span<const PoolItem> pool,
                                                     int n_sft, int n_rl,
                                                     const SamplePlan& plan) {
  if (static_cast<int>(pool.size()) < n_sft + n_rl) {
    throw std::invalid_argument("split_disjoint: pool smaller than n_sft + n_rl");
  }
  SamplePlan sft_plan = plan;
  sft_plan.n = n_sft;
  SampleResult sft = balanced_sample(pool, sft_plan);

  std::vector<PoolItem> rest;
  rest.reserve(pool.size() - sft.items.size());
  std::vector<bool> taken(pool.size(), false);
  {
    // Remove exactly the selected items; ids are unique by contract.
    std::unordered_map<std::string, int> selected;
    for (const PoolItem& item : sft.items) ++selected[item.id];
    for (const PoolItem& item : pool) {
      auto it = selected.find(item.id);
      if (it != selected.end() && it->second > 0) {
        --it->second;
        continue;
      }
      rest.push_back(item);
    }
  }

  SamplePlan rl_plan = plan;
  rl_plan.n = n_rl;
  rl_plan.seed = plan.seed + 1;  // fresh tie-break order for the second draw
  SampleResult rl = balanced_sample(rest, rl_plan);
  return {std::move(sft), std::move(rl)};
}

}  // namespace chexlab
