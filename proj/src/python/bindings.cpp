#include <map>

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "chexlab/grpo.hpp"
#include "chexlab/labels.hpp"
#include "chexlab/metrics.hpp"
#include "chexlab/parser.hpp"
#include "chexlab/policy.hpp"
#include "chexlab/rewards.hpp"
#include "chexlab/sampler.hpp"
#include "chexlab/toyenv.hpp"

namespace py = pybind11;
using namespace chexlab;

namespace {

LabelSet set_from_names(const std::vector<std::string>& names) {
  return labelset_from_names(names);
}

std::vector<std::string> names_of(LabelSet set) {
  std::vector<std::string> out;
  for (int id : set.ids()) out.emplace_back(canonical_labels()[static_cast<size_t>(id)].name);
  return out;
}

Dialect dialect_from_string(const std::string& name) {
  if (name == "think_solution") return Dialect::kThinkSolution;
  if (name == "analysis_conclusion") return Dialect::kAnalysisConclusion;
  throw std::invalid_argument("dialect must be think_solution or analysis_conclusion");
}

py::dict breakdown_dict(const RewardBreakdown& r) {
  py::dict d;
  d["total"] = r.total;
  d["match"] = r.match;
  d["partial"] = r.partial;
  d["fp"] = r.fp;
  d["collapse"] = r.collapse;
  d["format"] = r.format;
  d["length"] = r.length;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Balanced sampling, structured-output parsing, shaped rewards, and "
            "group-relative policy optimization on a synthetic multilabel diagnosis task";
  m.attr("__version__") = "0.1.0";

  m.def("canonical_labels", [] {
    std::vector<std::string> out;
    for (const Label& l : canonical_labels()) out.emplace_back(l.name);
    return out;
  });
  m.def("nih_compatible_subset", [] {
    std::vector<std::string> out;
    for (const Label& l : nih_compatible_subset()) out.emplace_back(l.name);
    return out;
  });
  m.def("parse_label", [](const std::string& text) -> py::object {
    if (auto l = parse_label(text)) return py::str(std::string(l->name));
    return py::none();
  });

  py::class_<ParsedOutput>(m, "ParsedOutput")
      .def_readonly("valid", &ParsedOutput::valid)
      .def_readonly("reasoning_text", &ParsedOutput::reasoning_text)
      .def_readonly("solution_text", &ParsedOutput::solution_text)
      .def_property_readonly("predicted",
                             [](const ParsedOutput& p) { return names_of(p.predicted); })
      .def_readonly("invalid_label_count", &ParsedOutput::invalid_label_count)
      .def_readonly("duplicate_count", &ParsedOutput::duplicate_count)
      .def_readonly("extraneous_text", &ParsedOutput::extraneous_text)
      .def_readonly("token_length", &ParsedOutput::token_length)
      .def("__repr__", [](const ParsedOutput& p) {
        return "<ParsedOutput valid=" + std::string(p.valid ? "True" : "False") + ">";
      });

  m.def(
      "parse_completion",
      [](const std::string& text, const std::string& dialect) {
        return parse_completion(text, FormatSpec{dialect_from_string(dialect)});
      },
      py::arg("text"), py::arg("dialect") = "think_solution");
  m.def(
      "is_valid_format",
      [](const std::string& text, const std::string& dialect) {
        return is_valid_format(text, FormatSpec{dialect_from_string(dialect)});
      },
      py::arg("text"), py::arg("dialect") = "think_solution");

  m.def("jaccard", [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return jaccard(set_from_names(a), set_from_names(b));
  });

  m.def(
      "hard_reward",
      [](const std::string& text, const std::vector<std::string>& gold, int min_length_tokens,
         double length_penalty) {
        HardRewardConfig cfg{min_length_tokens, length_penalty};
        const ParsedOutput parsed = parse_completion(text, FormatSpec{Dialect::kThinkSolution});
        return breakdown_dict(hard_reward(parsed, set_from_names(gold), cfg));
      },
      py::arg("text"), py::arg("gold"), py::arg("min_length_tokens") = 250,
      py::arg("length_penalty") = 0.2);

  // Streaming nuanced scorer: owns the collapse window, so score order matters.
  py::class_<NuancedRewardConfig>(m, "NuancedRewardConfig")
      .def(py::init<>())
      .def_readwrite("exact_match_bonus", &NuancedRewardConfig::exact_match_bonus)
      .def_readwrite("recall_scale", &NuancedRewardConfig::recall_scale)
      .def_readwrite("precision_scale", &NuancedRewardConfig::precision_scale)
      .def_readwrite("invalid_label_penalty", &NuancedRewardConfig::invalid_label_penalty)
      .def_readwrite("duplicate_penalty", &NuancedRewardConfig::duplicate_penalty)
      .def_readwrite("collapse_penalty", &NuancedRewardConfig::collapse_penalty)
      .def_readwrite("excess_repetition_penalty", &NuancedRewardConfig::excess_repetition_penalty)
      .def_readwrite("dominance_threshold", &NuancedRewardConfig::dominance_threshold)
      .def_readwrite("window_size", &NuancedRewardConfig::window_size)
      .def_readwrite("fp_base_penalty", &NuancedRewardConfig::fp_base_penalty)
      .def_readwrite("format_penalty", &NuancedRewardConfig::format_penalty)
      .def_readwrite("extraneous_penalty", &NuancedRewardConfig::extraneous_penalty);

  class PyScorer {
   public:
    PyScorer(NuancedRewardConfig cfg, std::map<std::string, double> prevalence,
             std::string dialect)
        : cfg_(cfg), monitor_(cfg.window_size), spec_{dialect_from_string(dialect)} {
      for (const auto& [name, p] : prevalence) {
        auto l = parse_label(name);
        if (!l) throw std::invalid_argument("unknown label in prevalence: " + name);
        stats_.prevalence[static_cast<size_t>(l->id)] = p;
      }
    }
    py::dict score(const std::string& text, const std::vector<std::string>& gold) {
      const ParsedOutput parsed = parse_completion(text, spec_);
      const RewardBreakdown r =
          nuanced_reward(parsed, set_from_names(gold), stats_, monitor_, cfg_);
      py::dict d = breakdown_dict(r);
      d["valid"] = parsed.valid;
      d["predicted"] = names_of(parsed.predicted);
      return d;
    }
    int window_length() const { return monitor_.window_length(); }

   private:
    NuancedRewardConfig cfg_;
    LabelStats stats_;
    CollapseMonitor monitor_;
    FormatSpec spec_;
  };

  py::class_<PyScorer>(m, "NuancedScorer")
      .def(py::init<NuancedRewardConfig, std::map<std::string, double>, std::string>(),
           py::arg("config") = NuancedRewardConfig{},
           py::arg("prevalence") = std::map<std::string, double>{},
           py::arg("dialect") = "think_solution")
      .def("score", &PyScorer::score, py::arg("text"), py::arg("gold"))
      .def_property_readonly("window_length", &PyScorer::window_length);

  m.def(
      "balanced_sample",
      [](const std::vector<std::pair<std::string, std::vector<std::string>>>& items, int n,
         double min_fraction, double penalty, uint64_t seed) {
        std::vector<PoolItem> pool;
        for (const auto& [id, labels] : items) pool.push_back({id, set_from_names(labels), {}});
        SamplePlan plan{n, min_fraction, penalty, seed};
        const SampleResult result = balanced_sample(pool, plan);
        std::vector<std::string> ids;
        for (const PoolItem& it : result.items) ids.push_back(it.id);
        return py::make_tuple(ids, result.warnings);
      },
      py::arg("items"), py::arg("n"), py::arg("min_fraction") = 0.05,
      py::arg("overrepresentation_penalty") = 2.0, py::arg("seed") = 0);

  m.def(
      "gen_task",
      [](int n, int d, uint64_t seed) {
        const TaskInstance task = gen_task(n, d, seed);
        std::vector<std::pair<std::vector<double>, std::vector<std::string>>> out;
        for (const auto& [obs, y] : task.examples) out.emplace_back(obs.features, names_of(y));
        return out;
      },
      py::arg("n"), py::arg("d") = 16, py::arg("seed") = 0);

  m.def(
      "oracle_trace",
      [](const std::vector<std::string>& labels, const std::string& dialect) {
        return oracle_trace(set_from_names(labels), FormatSpec{dialect_from_string(dialect)});
      },
      py::arg("labels"), py::arg("dialect") = "think_solution");

  m.def(
      "compute_advantages",
      [](const std::vector<double>& rewards, const std::string& mode, double std_floor) {
        const Normalization norm =
            mode == "per_token" ? Normalization::kPerToken : Normalization::kDrGrpo;
        return compute_advantages(rewards, norm, std_floor);
      },
      py::arg("rewards"), py::arg("mode") = "drgrpo", py::arg("std_floor") = 1e-6);

  m.def("kl_categorical", [](const std::vector<double>& p, const std::vector<double>& q) {
    return kl_categorical(p, q);
  });

  m.def("ema", [](const std::vector<double>& series, double alpha) {
    return ema(series, alpha);
  }, py::arg("series"), py::arg("alpha") = 0.95);

  m.def(
      "evaluate",
      [](const std::vector<std::string>& pred_texts,
         const std::vector<std::vector<std::string>>& gold_labels, const std::string& labels,
         const std::string& dialect) {
        const FormatSpec spec{dialect_from_string(dialect)};
        std::vector<ParsedOutput> preds;
        std::vector<LabelSet> golds;
        for (const std::string& t : pred_texts) preds.push_back(parse_completion(t, spec));
        for (const auto& g : gold_labels) golds.push_back(set_from_names(g));
        std::vector<int> filter;
        if (labels == "nih9") {
          for (const Label& l : nih_compatible_subset()) filter.push_back(l.id);
        } else {
          for (const Label& l : canonical_labels()) filter.push_back(l.id);
        }
        const EvalReport report = build_report(preds, golds, filter);
        py::dict out;
        py::dict micro, macro;
        micro["precision"] = report.micro.precision;
        micro["recall"] = report.micro.recall;
        micro["f1"] = report.micro.f1;
        macro["precision"] = report.macro.precision;
        macro["recall"] = report.macro.recall;
        macro["f1"] = report.macro.f1;
        out["micro"] = micro;
        out["macro"] = macro;
        out["fail_rate"] = report.fail_rate;
        out["n_examples"] = report.n_examples;
        py::dict per_category;
        for (const auto& [id, f1] : report.per_category_f1) {
          per_category[py::str(std::string(canonical_labels()[static_cast<size_t>(id)].name))] = f1;
        }
        out["per_category_f1"] = per_category;
        return out;
      },
      py::arg("pred_texts"), py::arg("gold_labels"), py::arg("labels") = "full14",
      py::arg("dialect") = "think_solution");

  // Policy + trainers, enough to drive the toy pipeline from python.
  py::class_<PolicyParams>(m, "PolicyParams")
      .def(py::init<int>(), py::arg("dim"))
      .def_static("random", &PolicyParams::random, py::arg("dim"), py::arg("seed"),
                  py::arg("scale") = 0.1)
      .def_property_readonly("dim", &PolicyParams::dim)
      .def("save", &PolicyParams::save, py::arg("path"), py::arg("seed") = 0)
      .def_static("load", &PolicyParams::load, py::arg("path"))
      .def("sample",
           [](const PolicyParams& p, const std::vector<double>& features, int max_len,
              double temperature, double top_p, uint64_t seed) {
             Observation obs{features};
             Rng rng(seed);
             const Completion c =
                 sample_sequence(p, obs, GenerationConfig{max_len, temperature, top_p}, rng);
             return py::make_tuple(c.text, c.tokens, c.logprobs);
           },
           py::arg("features"), py::arg("max_len") = 40, py::arg("temperature") = 0.8,
           py::arg("top_p") = 0.95, py::arg("seed") = 0)
      .def("greedy_text", [](const PolicyParams& p, const std::vector<double>& features,
                             int max_len) {
        Observation obs{features};
        Rng rng(0);
        return sample_sequence(p, obs, GenerationConfig{max_len, 0.0, 1.0}, rng).text;
      }, py::arg("features"), py::arg("max_len") = 40);

  m.def(
      "train_sft",
      [](const std::vector<std::pair<std::vector<double>, std::vector<std::string>>>& data,
         int max_epochs, int patience, int batch_size, double learning_rate, uint64_t seed) {
        std::vector<SftExample> traces;
        for (const auto& [features, labels] : data) {
          traces.push_back(make_sft_example(Observation{features}, set_from_names(labels)));
        }
        SftConfig cfg;
        cfg.max_epochs = max_epochs;
        cfg.patience = patience;
        cfg.batch_size = batch_size;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        SftResult result = train_sft(cfg, traces);
        py::list log;
        for (const SftEpochLog& e : result.log) {
          py::dict row;
          row["epoch"] = e.epoch;
          row["train_loss"] = e.train_loss;
          row["val_loss"] = e.val_loss;
          row["lr"] = e.lr;
          log.append(row);
        }
        return py::make_tuple(result.params, log, result.best_epoch);
      },
      py::arg("data"), py::arg("max_epochs") = 6, py::arg("patience") = 2,
      py::arg("batch_size") = 8, py::arg("learning_rate") = 0.05, py::arg("seed") = 0);

  m.def(
      "train_grpo",
      [](const PolicyParams& sft_checkpoint,
         const std::vector<std::pair<std::vector<double>, std::vector<std::string>>>& data,
         int steps, int group_size, double learning_rate, double kl_coef, double clip_low,
         double clip_high, const std::string& reward, const std::string& normalization,
         int min_length_tokens, uint64_t seed) {
        std::vector<std::pair<Observation, LabelSet>> examples;
        std::vector<LabelSet> golds;
        for (const auto& [features, labels] : data) {
          examples.emplace_back(Observation{features}, set_from_names(labels));
          golds.push_back(examples.back().second);
        }
        GrpoConfig cfg;
        cfg.steps = steps;
        cfg.group_size = group_size;
        cfg.learning_rate = learning_rate;
        cfg.kl_coef = kl_coef;
        cfg.clip_low = clip_low;
        cfg.clip_high = clip_high;
        cfg.reward = reward == "nuanced" ? RewardKind::kNuanced : RewardKind::kHard;
        cfg.normalization =
            normalization == "per_token" ? Normalization::kPerToken : Normalization::kDrGrpo;
        cfg.seed = seed;
        RewardSetup setup;
        setup.kind = cfg.reward;
        setup.hard.min_length_tokens = min_length_tokens;
        setup.stats = label_stats(golds);
        GrpoResult result = train_grpo(sft_checkpoint, examples, cfg, setup);
        py::list log;
        for (const GrpoStepLog& s : result.log) {
          py::dict row;
          row["step"] = s.step;
          row["reward_mean"] = s.reward_mean;
          row["entropy"] = s.entropy;
          row["kl"] = s.kl;
          row["completion_length_mean"] = s.completion_length_mean;
          log.append(row);
        }
        return py::make_tuple(result.params, log);
      },
      py::arg("sft_checkpoint"), py::arg("data"), py::arg("steps") = 100,
      py::arg("group_size") = 4, py::arg("learning_rate") = 1.0, py::arg("kl_coef") = 0.15,
      py::arg("clip_low") = 0.15, py::arg("clip_high") = 0.22, py::arg("reward") = "hard",
      py::arg("normalization") = "drgrpo", py::arg("min_length_tokens") = 20,
      py::arg("seed") = 0);
}
