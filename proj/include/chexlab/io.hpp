#pragma once

#include <span>
#include <string>
#include <vector>

#include "chexlab/labels.hpp"
#include "chexlab/metrics.hpp"
#include "chexlab/sampler.hpp"
#include "chexlab/toyenv.hpp"

#include "json.hpp"

namespace chexlab {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pool files are JSONL: {"id": str, "labels": [canonical names], "payload": {}}.
std::vector<PoolItem> read_pool_jsonl(const std::string& path);
void write_pool_jsonl(const std::string& path, std::span<const PoolItem> items);

// Task examples exported in the pool schema, features under payload.features.
std::vector<PoolItem> task_to_pool(const TaskInstance& task);
std::vector<std::pair<Observation, LabelSet>> pool_to_examples(std::span<const PoolItem> items);

nlohmann::json coverage_json(const SampleResult& result, int n);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

// CSV with one row per record; a *_ema column is appended for every numeric
// column, smoothed at the given alpha.
void write_csv_with_ema(const std::string& path,
                        std::span<const std::string> columns,
                        const std::vector<std::vector<double>>& rows,
                        double alpha);

LabelStats read_stats_json(const std::string& path);

}  // namespace chexlab
