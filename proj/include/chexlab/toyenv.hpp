#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chexlab/labels.hpp"
#include "chexlab/parser.hpp"

namespace chexlab {

struct Observation {
  std::vector<double> features;  // entries in [0,1]
};

// Synthetic multilabel diagnosis task. Pathology label l is present iff
// features[l] > kFeatureThreshold; "No Finding" is assigned when nothing
// triggers, so every example carries at least one label.
struct TaskInstance {
  std::vector<std::pair<Observation, LabelSet>> examples;
  int dim = 0;
  uint64_t seed = 0;
  std::string rule;
};

inline constexpr double kFeatureThreshold = 0.7;
inline constexpr int kNoFindingId = 8;

// Deterministic per seed. Throws if d < 14.
TaskInstance gen_task(int n, int d, uint64_t seed);

// Labels implied by a feature vector under the task rule.
LabelSet rule_labels(const Observation& obs);

// A well-formed trace in the requested dialect whose solution lists exactly
// the members of `y`, comma separated, and whose reasoning mentions each
// label once. Throws on an empty set.
std::string oracle_trace(LabelSet y, const FormatSpec& spec);

}  // namespace chexlab
