#pragma once

#include <cstdint>
#include <string>

#include "chexlab/grpo.hpp"
#include "chexlab/parser.hpp"
#include "chexlab/rewards.hpp"
#include "chexlab/sampler.hpp"

namespace chexlab {

struct TaskConfig {
  int n = 3000;
  int d = 16;
  uint64_t seed = 7;
};

struct SamplerConfig {
  int n_sft = 2000;
  int n_rl = 1000;
  double min_fraction = 0.05;
  double overrepresentation_penalty = 2.0;
  uint64_t seed = 1;
};

struct EvalConfig {
  std::string labels = "full14";  // full14 | nih9
  Dialect dialect = Dialect::kThinkSolution;
};

struct IoConfig {
  std::string out_dir = "runs/default";
  std::string pool = "runs/default/pool.jsonl";
  std::string sft_set = "runs/default/sft.jsonl";
  std::string rl_set = "runs/default/rl.jsonl";
  std::string coverage = "runs/default/coverage.json";
  std::string sft_checkpoint = "runs/default/sft_checkpoint.txt";
  std::string grpo_checkpoint = "runs/default/grpo_checkpoint.txt";
  std::string stats_file;  // optional prevalence source for the scorer
};

// Full run configuration, loadable from a flat INI-style file. Unknown keys
// are rejected; omitted keys keep the defaults above.
struct RunConfig {
  TaskConfig task;
  SamplerConfig sampler;
  SftConfig sft;
  GrpoConfig grpo;
  HardRewardConfig hard;
  NuancedRewardConfig nuanced;
  EvalConfig eval;
  IoConfig io;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);
  std::string to_ini() const;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace chexlab
