#include "chexlab/io.hpp"

#include <cstdio>
#include <fstream>

namespace chexlab {

using nlohmann::json;

std::vector<PoolItem> read_pool_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pool file: " + path);
  std::vector<PoolItem> items;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    PoolItem item;
    try {
      item.id = j.at("id").get<std::string>();
      const std::vector<std::string> names = j.at("labels").get<std::vector<std::string>>();
      item.labels = labelset_from_names(names);
      item.payload = j.value("payload", json::object());
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (item.labels.empty()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": item has no labels");
    }
    items.push_back(std::move(item));
  }
  return items;
}

void write_pool_jsonl(const std::string& path, std::span<const PoolItem> items) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pool file: " + path);
  for (const PoolItem& item : items) {
    json j;
    j["id"] = item.id;
    std::vector<std::string> names;
    for (int id : item.labels.ids()) {
      names.emplace_back(canonical_labels()[static_cast<size_t>(id)].name);
    }
    j["labels"] = names;
    j["payload"] = item.payload;
    out << j.dump() << "\n";
  }
}

std::vector<PoolItem> task_to_pool(const TaskInstance& task) {
  std::vector<PoolItem> items;
  items.reserve(task.examples.size());
  char buf[32];
  for (size_t i = 0; i < task.examples.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "ex-%06zu", i);
    PoolItem item;
    item.id = buf;
    item.labels = task.examples[i].second;
    item.payload = json{{"features", task.examples[i].first.features}};
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<std::pair<Observation, LabelSet>> pool_to_examples(std::span<const PoolItem> items) {
  std::vector<std::pair<Observation, LabelSet>> out;
  out.reserve(items.size());
  for (const PoolItem& item : items) {
    if (!item.payload.contains("features")) {
      throw DataError("pool item '" + item.id + "' has no payload.features");
    }
    Observation obs;
    obs.features = item.payload.at("features").get<std::vector<double>>();
    out.emplace_back(std::move(obs), item.labels);
  }
  return out;
}

json coverage_json(const SampleResult& result, int n) {
  json counts = json::object();
  json prevalence = json::object();
  for (const Label& l : canonical_labels()) {
    counts[std::string(l.name)] = result.coverage[static_cast<size_t>(l.id)];
    prevalence[std::string(l.name)] =
        n > 0 ? static_cast<double>(result.coverage[static_cast<size_t>(l.id)]) / n : 0.0;
  }
  json j;
  j["n"] = n;
  j["counts"] = counts;
  j["prevalence"] = prevalence;
  j["warnings"] = result.warnings;
  return j;
}

json report_to_json(const EvalReport& report) {
  json per_category = json::object();
  for (const auto& [id, f1] : report.per_category_f1) {
    per_category[std::string(canonical_labels()[static_cast<size_t>(id)].name)] = f1;
  }
  return json{
      {"n_examples", report.n_examples},
      {"micro", {{"precision", report.micro.precision},
                 {"recall", report.micro.recall},
                 {"f1", report.micro.f1}}},
      {"macro", {{"precision", report.macro.precision},
                 {"recall", report.macro.recall},
                 {"f1", report.macro.f1}}},
      {"fail_rate", report.fail_rate},
      {"per_category_f1", per_category},
  };
}

std::string report_to_table(const EvalReport& report) {
  char buf[128];
  std::string out;
  out += "Category                     F1\n";
  out += "-------------------------  -----\n";
  for (const auto& [id, f1] : report.per_category_f1) {
    std::snprintf(buf, sizeof(buf), "%-25s  %.3f\n",
                  std::string(canonical_labels()[static_cast<size_t>(id)].name).c_str(), f1);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "%-25s  %.3f\n", "Overall Average (Macro F1)", report.macro.f1);
  out += "-------------------------  -----\n";
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "micro P/R/F1 = %.3f/%.3f/%.3f  macro P/R/F1 = %.3f/%.3f/%.3f  fail = %.3f  n = %ld\n",
                report.micro.precision, report.micro.recall, report.micro.f1,
                report.macro.precision, report.macro.recall, report.macro.f1,
                report.fail_rate, report.n_examples);
  out += buf;
  return out;
}

void write_csv_with_ema(const std::string& path,
                        std::span<const std::string> columns,
                        const std::vector<std::vector<double>>& rows,
                        double alpha) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write csv: " + path);
  for (size_t c = 0; c < columns.size(); ++c) {
    out << (c ? "," : "") << columns[c];
  }
  for (size_t c = 1; c < columns.size(); ++c) {
    out << "," << columns[c] << "_ema";  // first column is the step index
  }
  out << "\n";
  if (rows.empty()) return;

  std::vector<std::vector<double>> smoothed;
  for (size_t c = 1; c < columns.size(); ++c) {
    std::vector<double> series;
    series.reserve(rows.size());
    for (const auto& row : rows) series.push_back(row[c]);
    smoothed.push_back(ema(series, alpha));
  }
  char buf[64];
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < columns.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.10g", rows[r][c]);
      out << (c ? "," : "") << buf;
    }
    for (size_t c = 0; c + 1 < columns.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.10g", smoothed[c][r]);
      out << "," << buf;
    }
    out << "\n";
  }
}

LabelStats read_stats_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stats file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  const json& prev = j.contains("prevalence") ? j.at("prevalence") : j;
  LabelStats stats;
  for (const Label& l : canonical_labels()) {
    const std::string name(l.name);
    if (prev.contains(name)) {
      stats.prevalence[static_cast<size_t>(l.id)] = prev.at(name).get<double>();
    }
  }
  return stats;
}

}  // namespace chexlab
