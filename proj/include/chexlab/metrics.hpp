#pragma once

#include <array>
#include <span>
#include <vector>

#include "chexlab/labels.hpp"
#include "chexlab/parser.hpp"

namespace chexlab {

struct ConfusionCounts {
  std::array<long, kNumLabels> tp{};
  std::array<long, kNumLabels> fp{};
  std::array<long, kNumLabels> fn{};
  std::vector<int> filter;  // label ids the counts were restricted to
  long n_examples = 0;
  long n_fail = 0;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-label confusion over the filtered label set. Invalid parses count as
// empty predictions (every gold label becomes a FN) and bump n_fail.
ConfusionCounts confusion(std::span<const ParsedOutput> preds,
                          std::span<const LabelSet> golds,
                          std::span<const int> label_filter);

// P/R/F1 from a single pooled TP/FP/FN triple; zero denominators yield 0.
Prf prf_from_counts(long tp, long fp, long fn);

Prf micro_prf(const ConfusionCounts& c);

// Unweighted mean of per-label precision/recall/F1 over the filter.
Prf macro_prf(const ConfusionCounts& c);

double fail_rate(std::span<const ParsedOutput> preds);

// s_0 = x_0; s_t = alpha * s_{t-1} + (1 - alpha) * x_t.
std::vector<double> ema(std::span<const double> series, double alpha);

struct EvalReport {
  Prf micro;
  Prf macro;
  double fail_rate = 0.0;
  std::vector<std::pair<int, double>> per_category_f1;  // (label id, F1), canonical order
  long n_examples = 0;
};

EvalReport build_report(std::span<const ParsedOutput> preds,
                        std::span<const LabelSet> golds,
                        std::span<const int> label_filter);

}  // namespace chexlab
