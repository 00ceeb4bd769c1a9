#include "chexlab/metrics.hpp"

#include <stdexcept>

namespace chexlab {

ConfusionCounts confusion(std::span<const ParsedOutput> preds,
                          std::span<const LabelSet> golds,
                          std::span<const int> label_filter) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("confusion: prediction/gold length mismatch");
  }
  ConfusionCounts c;
  c.filter.assign(label_filter.begin(), label_filter.end());
  c.n_examples = static_cast<long>(preds.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    const bool valid = preds[i].valid;
    if (!valid) ++c.n_fail;
    const LabelSet predicted = valid ? preds[i].predicted : LabelSet{};
    for (int id : label_filter) {
      const bool in_pred = predicted.contains(id);
      const bool in_gold = golds[i].contains(id);
      if (in_pred && in_gold) ++c.tp[static_cast<size_t>(id)];
      else if (in_pred) ++c.fp[static_cast<size_t>(id)];
      else if (in_gold) ++c.fn[static_cast<size_t>(id)];
    }
  }
  return c;
}

Prf prf_from_counts(long tp, long fp, long fn) {
  Prf out;
  if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (out.precision + out.recall > 0) {
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  }
  return out;
}

Prf micro_prf(const ConfusionCounts& c) {
  long tp = 0, fp = 0, fn = 0;
  for (int id : c.filter) {
    tp += c.tp[static_cast<size_t>(id)];
    fp += c.fp[static_cast<size_t>(id)];
    fn += c.fn[static_cast<size_t>(id)];
  }
  return prf_from_counts(tp, fp, fn);
}

Prf macro_prf(const ConfusionCounts& c) {
  Prf sum;
  if (c.filter.empty()) return sum;
  for (int id : c.filter) {
    const Prf p = prf_from_counts(c.tp[static_cast<size_t>(id)],
                                  c.fp[static_cast<size_t>(id)],
                                  c.fn[static_cast<size_t>(id)]);
    sum.precision += p.precision;
    sum.recall += p.recall;
    sum.f1 += p.f1;
  }
  const double n = static_cast<double>(c.filter.size());
  sum.precision /= n;
  sum.recall /= n;
  sum.f1 /= n;
  return sum;
}

double fail_rate(std::span<const ParsedOutput> preds) {
  if (preds.empty()) return 0.0;
  long fails = 0;
  for (const ParsedOutput& p : preds) {
    if (!p.valid) ++fails;
  }
  return static_cast<double>(fails) / static_cast<double>(preds.size());
}

std::vector<double> ema(std::span<const double> series, double alpha) {
  if (series.empty()) throw std::invalid_argument("ema: empty series");
  std::vector<double> out;
  out.reserve(series.size());
  out.push_back(series[0]);
  for (size_t t = 1; t < series.size(); ++t) {
    out.push_back(alpha * out.back() + (1.0 - alpha) * series[t]);
  }
  return out;
}

EvalReport build_report(std::span<const ParsedOutput> preds,
                        std::span<const LabelSet> golds,
                        std::span<const int> label_filter) {
  const ConfusionCounts c = confusion(preds, golds, label_filter);
  EvalReport report;
  report.micro = micro_prf(c);
  report.macro = macro_prf(c);
  report.fail_rate = fail_rate(preds);
  report.n_examples = c.n_examples;
  for (int id : c.filter) {
    const Prf p = prf_from_counts(c.tp[static_cast<size_t>(id)],
                                  c.fp[static_cast<size_t>(id)],
                                  c.fn[static_cast<size_t>(id)]);
    report.per_category_f1.emplace_back(id, p.f1);
  }
  return report;
}

}  // namespace chexlab
