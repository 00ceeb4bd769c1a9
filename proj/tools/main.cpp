#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "json.hpp"

#include "chexlab/config.hpp"
#include "chexlab/grpo.hpp"
#include "chexlab/io.hpp"
#include "chexlab/metrics.hpp"
#include "chexlab/parser.hpp"
#include "chexlab/policy.hpp"
#include "chexlab/rewards.hpp"
#include "chexlab/sampler.hpp"
#include "chexlab/toyenv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chexlab;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

void write_resolved_config(const RunConfig& config) {
  fs::create_directories(config.io.out_dir);
  std::ofstream out(fs::path(config.io.out_dir) / "config.resolved.ini");
  out << config.to_ini();
}

void write_manifest(const RunConfig& config, const std::string& stage, const json& extra) {
  json manifest;
  manifest["stage"] = stage;
  manifest["out_dir"] = config.io.out_dir;
  manifest["extra"] = extra;
  std::ofstream out(fs::path(config.io.out_dir) / ("manifest_" + stage + ".json"));
  out << manifest.dump(2) << "\n";
}

std::vector<int> label_filter_from_name(const std::string& name) {
  std::vector<int> filter;
  if (name == "nih9") {
    for (const Label& l : nih_compatible_subset()) filter.push_back(l.id);
  } else {
    for (const Label& l : canonical_labels()) filter.push_back(l.id);
  }
  return filter;
}

int cmd_sample(const RunConfig& config, bool gen_pool) {
  if (gen_pool && !fs::exists(config.io.pool)) {
    TaskInstance task = gen_task(config.task.n, config.task.d, config.task.seed);
    fs::create_directories(fs::path(config.io.pool).parent_path());
    write_pool_jsonl(config.io.pool, task_to_pool(task));
  }
  const std::vector<PoolItem> pool = read_pool_jsonl(config.io.pool);

  SamplePlan plan;
  plan.min_fraction = config.sampler.min_fraction;
  plan.overrepresentation_penalty = config.sampler.overrepresentation_penalty;
  plan.seed = config.sampler.seed;
  auto [sft, rl] = split_disjoint(pool, config.sampler.n_sft, config.sampler.n_rl, plan);

  write_resolved_config(config);
  write_pool_jsonl(config.io.sft_set, sft.items);
  write_pool_jsonl(config.io.rl_set, rl.items);
  json coverage;
  coverage["sft"] = coverage_json(sft, config.sampler.n_sft);
  coverage["rl"] = coverage_json(rl, config.sampler.n_rl);
  {
    std::ofstream out(config.io.coverage);
    if (!out) throw DataError("cannot write coverage file: " + config.io.coverage);
    out << coverage.dump(2) << "\n";
  }
  write_manifest(config, "sample",
                 json{{"pool", config.io.pool},
                      {"sft_set", config.io.sft_set},
                      {"rl_set", config.io.rl_set},
                      {"coverage", config.io.coverage}});

  if (!sft.warnings.empty() || !rl.warnings.empty()) {
    std::cerr << "coverage infeasible:\n";
    for (const std::string& w : sft.warnings) std::cerr << "  sft: " << w << "\n";
    for (const std::string& w : rl.warnings) std::cerr << "  rl: " << w << "\n";
    return kExitUsage;
  }
  std::cout << "wrote " << config.io.sft_set << " (" << sft.items.size() << " items), "
            << config.io.rl_set << " (" << rl.items.size() << " items)\n";
  return 0;
}

int cmd_train_sft(const RunConfig& config) {
  const std::vector<PoolItem> items = read_pool_jsonl(config.io.sft_set);
  const auto examples = pool_to_examples(items);
  std::vector<SftExample> traces;
  traces.reserve(examples.size());
  for (const auto& [obs, y] : examples) traces.push_back(make_sft_example(obs, y));

  SftResult result = train_sft(config.sft, traces);
  write_resolved_config(config);
  fs::create_directories(fs::path(config.io.sft_checkpoint).parent_path().empty()
                             ? "."
                             : fs::path(config.io.sft_checkpoint).parent_path());
  result.params.save(config.io.sft_checkpoint, config.sft.seed);

  std::vector<std::string> columns = {"epoch", "train_loss", "val_loss", "lr"};
  std::vector<std::vector<double>> rows;
  for (const SftEpochLog& e : result.log) {
    rows.push_back({static_cast<double>(e.epoch), e.train_loss, e.val_loss, e.lr});
  }
  const std::string csv = (fs::path(config.io.out_dir) / "sft_metrics.csv").string();
  write_csv_with_ema(csv, columns, rows, 0.95);
  write_manifest(config, "sft",
                 json{{"checkpoint", config.io.sft_checkpoint},
                      {"metrics", csv},
                      {"best_epoch", result.best_epoch},
                      {"best_val_loss", result.best_val_loss},
                      {"n_traces", traces.size()}});
  std::cout << "sft done: best epoch " << result.best_epoch << ", val loss "
            << result.best_val_loss << ", checkpoint " << config.io.sft_checkpoint << "\n";
  return 0;
}

int cmd_train_grpo(const RunConfig& config) {
  if (!fs::exists(config.io.sft_checkpoint)) {
    throw DataError("missing SFT checkpoint: " + config.io.sft_checkpoint);
  }
  const PolicyParams sft_params = PolicyParams::load(config.io.sft_checkpoint);
  const std::vector<PoolItem> items = read_pool_jsonl(config.io.rl_set);
  const auto examples = pool_to_examples(items);

  RewardSetup reward;
  reward.kind = config.grpo.reward;
  reward.hard = config.hard;
  reward.nuanced = config.nuanced;
  {
    std::vector<LabelSet> golds;
    golds.reserve(examples.size());
    for (const auto& [obs, y] : examples) golds.push_back(y);
    reward.stats = label_stats(golds);
  }

  write_resolved_config(config);
  const std::string latest =
      (fs::path(config.io.out_dir) / "grpo_checkpoint_latest.txt").string();
  GrpoHooks hooks;
  hooks.on_checkpoint = [&](int step, const PolicyParams& p) {
    p.save(latest, config.grpo.seed + static_cast<uint64_t>(step));
  };

  GrpoResult result = train_grpo(sft_params, examples, config.grpo, reward, hooks);
  result.params.save(config.io.grpo_checkpoint, config.grpo.seed);

  std::vector<std::string> columns = {"step",    "reward_total", "match",   "partial",
                                      "fp",      "collapse",     "format",  "length",
                                      "completion_length", "entropy", "kl", "objective"};
  std::vector<std::vector<double>> rows;
  for (const GrpoStepLog& s : result.log) {
    rows.push_back({static_cast<double>(s.step), s.reward_mean, s.component_means.match,
                    s.component_means.partial, s.component_means.fp, s.component_means.collapse,
                    s.component_means.format, s.component_means.length, s.completion_length_mean,
                    s.entropy, s.kl, s.objective});
  }
  const std::string csv = (fs::path(config.io.out_dir) / "grpo_metrics.csv").string();
  write_csv_with_ema(csv, columns, rows, 0.95);
  write_manifest(config, "grpo",
                 json{{"checkpoint", config.io.grpo_checkpoint},
                      {"reference_policy", config.io.sft_checkpoint},
                      {"metrics", csv},
                      {"periodic_checkpoint", latest},
                      {"steps", config.grpo.steps},
                      {"n_examples", examples.size()}});
  std::cout << "grpo done: " << config.grpo.steps << " steps, checkpoint "
            << config.io.grpo_checkpoint << "\n";
  return 0;
}

int cmd_score(const RunConfig& config, const std::string& in_path, const std::string& out_path) {
  std::ifstream in_file;
  std::istream* in = &std::cin;
  if (!in_path.empty()) {
    in_file.open(in_path);
    if (!in_file) throw DataError("cannot open input: " + in_path);
    in = &in_file;
  }
  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    out_file.open(out_path);
    if (!out_file) throw DataError("cannot open output: " + out_path);
    out = &out_file;
  }

  LabelStats stats;
  if (!config.io.stats_file.empty()) stats = read_stats_json(config.io.stats_file);
  CollapseMonitor monitor(config.nuanced.window_size);
  const FormatSpec format{config.eval.dialect};

  std::string line;
  while (std::getline(*in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      *out << json{{"id", nullptr}, {"error", "parse"}}.dump() << "\n";
      continue;
    }
    json id = j.contains("id") ? j.at("id") : json(nullptr);
    std::string text;
    LabelSet gold;
    try {
      text = j.at("text").get<std::string>();
      const auto names = j.at("gold").get<std::vector<std::string>>();
      gold = labelset_from_names(names);
    } catch (const std::exception&) {
      *out << json{{"id", id}, {"error", "schema"}}.dump() << "\n";
      continue;
    }

    const ParsedOutput parsed = parse_completion(text, format);
    RewardBreakdown r;
    if (config.grpo.reward == RewardKind::kHard) {
      r = hard_reward(parsed, gold, config.hard);
    } else {
      r = nuanced_reward(parsed, gold, stats, monitor, config.nuanced);
    }
    std::vector<std::string> predicted;
    for (int lid : parsed.predicted.ids()) {
      predicted.emplace_back(canonical_labels()[static_cast<size_t>(lid)].name);
    }
    *out << json{{"id", id},
                 {"valid", parsed.valid},
                 {"predicted", predicted},
                 {"reward_total", r.total},
                 {"components",
                  {{"match", r.match},
                   {"partial", r.partial},
                   {"fp", r.fp},
                   {"collapse", r.collapse},
                   {"format", r.format},
                   {"length", r.length}}}}
                .dump()
         << "\n";
  }
  return 0;
}

int cmd_eval(const RunConfig& config, const std::string& pred_path,
             const std::string& gold_path, const std::string& labels_override,
             const std::string& out_dir_override) {
  std::ifstream pred_in(pred_path);
  if (!pred_in) throw DataError("cannot open predictions: " + pred_path);
  std::ifstream gold_in(gold_path);
  if (!gold_in) throw DataError("cannot open gold: " + gold_path);

  std::unordered_map<std::string, LabelSet> gold_by_id;
  std::string line;
  size_t lineno = 0;
  while (std::getline(gold_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      gold_by_id[j.at("id").get<std::string>()] =
          labelset_from_names(j.at("labels").get<std::vector<std::string>>());
    } catch (const std::exception& e) {
      throw DataError(gold_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }

  const FormatSpec format{config.eval.dialect};
  std::vector<ParsedOutput> preds;
  std::vector<LabelSet> golds;
  lineno = 0;
  size_t matched = 0;
  while (std::getline(pred_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    std::string id, text;
    try {
      j = json::parse(line);
      id = j.at("id").get<std::string>();
      text = j.at("text").get<std::string>();
    } catch (const std::exception& e) {
      throw DataError(pred_path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    auto it = gold_by_id.find(id);
    if (it == gold_by_id.end()) {
      throw DataError("prediction id '" + id + "' has no gold entry");
    }
    ++matched;
    preds.push_back(parse_completion(text, format));
    golds.push_back(it->second);
  }
  if (matched == 0) throw DataError("no prediction ids align with the gold file");

  const std::string labels_name = labels_override.empty() ? config.eval.labels : labels_override;
  const std::vector<int> filter = label_filter_from_name(labels_name);
  const EvalReport report = build_report(preds, golds, filter);

  const std::string out_dir = out_dir_override.empty() ? config.io.out_dir : out_dir_override;
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "report.json");
    out << report_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "report.txt");
    out << report_to_table(report);
  }
  std::cout << report_to_table(report);
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& out_path, double alpha) {
  std::ifstream in(in_path);
  if (!in) throw DataError("cannot open metrics csv: " + in_path);
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty metrics csv: " + in_path);

  std::vector<std::string> columns;
  {
    std::istringstream hs(header);
    std::string cell;
    while (std::getline(hs, cell, ',')) columns.push_back(cell);
  }
  // Recompute smoothing from the raw columns; drop any stale *_ema columns.
  std::vector<size_t> keep;
  std::vector<std::string> raw_columns;
  for (size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() > 4 && columns[c].ends_with("_ema")) continue;
    keep.push_back(c);
    raw_columns.push_back(columns[c]);
  }

  std::vector<std::vector<double>> rows;
  std::string line;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> all;
    while (std::getline(ls, cell, ',')) {
      try {
        all.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError(in_path + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell + "'");
      }
    }
    if (all.size() != columns.size()) {
      throw DataError(in_path + ":" + std::to_string(lineno) + ": wrong column count");
    }
    std::vector<double> row;
    for (size_t c : keep) row.push_back(all[c]);
    rows.push_back(std::move(row));
  }
  write_csv_with_ema(out_path, raw_columns, rows, alpha);
  std::cout << "wrote " << out_path << " (" << rows.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chexlab: balanced sampling, SFT+GRPO training, reward scoring, and evaluation "
               "for a synthetic multilabel diagnosis task"};
  app.require_subcommand(1);

  std::string config_path;
  std::string stage, in_path, out_path, pred_path, gold_path, labels_override, out_dir_override;
  double alpha = 0.95;
  bool gen_pool = false;

  CLI::App* sample = app.add_subcommand("sample", "Draw balanced, disjoint SFT/RL splits from a pool");
  sample->add_option("--config", config_path, "Run config file")->required();
  sample->add_flag("--gen-pool", gen_pool, "Generate the synthetic task pool first if absent");

  CLI::App* train = app.add_subcommand("train", "Train a stage of the pipeline");
  train->add_option("--config", config_path, "Run config file")->required();
  train->add_option("--stage", stage, "sft | grpo")->required()
      ->check(CLI::IsMember({"sft", "grpo"}));

  CLI::App* score = app.add_subcommand("score", "Stream-score completions against gold labels");
  score->add_option("--config", config_path, "Run config file")->required();
  score->add_option("--in", in_path, "Input JSONL (default stdin)");
  score->add_option("--out", out_path, "Output JSONL (default stdout)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a predictions file against gold labels");
  eval->add_option("--config", config_path, "Run config file")->required();
  eval->add_option("--pred", pred_path, "Predictions JSONL: {id, text}")->required();
  eval->add_option("--gold", gold_path, "Gold JSONL: {id, labels}")->required();
  eval->add_option("--labels", labels_override, "full14 | nih9")
      ->check(CLI::IsMember({"full14", "nih9"}));
  eval->add_option("--out-dir", out_dir_override, "Report output directory");

  CLI::App* report = app.add_subcommand("report", "Extract plot-ready curves with EMA columns");
  report->add_option("--in", in_path, "Metrics CSV")->required();
  report->add_option("--out", out_path, "Output CSV")->required();
  report->add_option("--alpha", alpha, "EMA smoothing factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (report->parsed()) return cmd_report(in_path, out_path, alpha);
    const RunConfig config = RunConfig::from_file(config_path);
    if (sample->parsed()) return cmd_sample(config, gen_pool);
    if (train->parsed()) return stage == "sft" ? cmd_train_sft(config) : cmd_train_grpo(config);
    if (score->parsed()) return cmd_score(config, in_path, out_path);
    if (eval->parsed()) return cmd_eval(config, pred_path, gold_path, labels_override, out_dir_override);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
