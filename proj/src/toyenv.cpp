#include "chexlab/toyenv.hpp"

#include <stdexcept>

#include "chexlab/rng.hpp"

namespace chexlab {

LabelSet rule_labels(const Observation& obs) {
  LabelSet y;
  for (int id = 0; id < kNumLabels; ++id) {
    if (id == kNoFindingId) continue;
    if (obs.features[static_cast<size_t>(id)] > kFeatureThreshold) y.insert(id);
  }
  if (y.empty()) y.insert(kNoFindingId);
  return y;
}

TaskInstance gen_task(int n, int d, uint64_t seed) {
  if (d < kNumLabels) {
    throw std::invalid_argument("gen_task: feature dimension must be >= 14");
  }
  TaskInstance task;
  task.dim = d;
  task.seed = seed;
  task.rule = "label l present iff features[l] > 0.7; No Finding when none trigger";
  Rng rng(seed);
  task.examples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Observation obs;
    obs.features.resize(static_cast<size_t>(d));
    for (double& f : obs.features) f = rng.uniform();
    LabelSet y = rule_labels(obs);
    task.examples.emplace_back(std::move(obs), y);
  }
  return task;
}

std::string oracle_trace(LabelSet y, const FormatSpec& spec) {
  if (y.empty()) throw std::invalid_argument("oracle_trace: empty label set");
  const std::string names = label_names_joined(y, ", ");
  switch (spec.dialect) {
    case Dialect::kThinkSolution:
      return "<think>" + names + "</think>\n<solution>" + names + "</solution>";
    case Dialect::kAnalysisConclusion:
      return "{analysis: " + names + ", conclusion: " + names + "}";
  }
  throw std::logic_error("unreachable");
}

}  // namespace chexlab
