#include "chexlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace chexlab {

namespace {

std::string trim_copy(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Field registry: each config key maps to a parse-and-assign closure plus a
// printer, so loading and serialization can't drift apart.
struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

struct Schema {
  // section -> key -> field, with stable insertion order for printing
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>> sections;

  std::vector<std::pair<std::string, Field>>& section(const std::string& name) {
    for (auto& [n, fields] : sections) {
      if (n == name) return fields;
    }
    sections.emplace_back(name, std::vector<std::pair<std::string, Field>>{});
    return sections.back().second;
  }
};

template <class T>
std::string show(const T& v) {
  if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_floating_point_v<T>) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  } else {
    return std::to_string(v);
  }
}

template <class T>
void assign(const std::string& text, T* out, const std::string& where) {
  if constexpr (std::is_same_v<T, std::string>) {
    *out = text;
  } else if constexpr (std::is_floating_point_v<T>) {
    try {
      size_t pos = 0;
      *out = std::stod(text, &pos);
      if (pos != text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad number for " + where + ": '" + text + "'");
    }
  } else {
    T value{};
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || p != text.data() + text.size()) {
      throw ConfigError("bad integer for " + where + ": '" + text + "'");
    }
    *out = value;
  }
}

template <class T>
Field field(T* ptr, const std::string& where) {
  return Field{[ptr, where](const std::string& text) { assign(text, ptr, where); },
               [ptr]() { return show(*ptr); }};
}

Field enum_field(Normalization* ptr) {
  return Field{[ptr](const std::string& text) {
                 if (text == "per_token") *ptr = Normalization::kPerToken;
                 else if (text == "drgrpo") *ptr = Normalization::kDrGrpo;
                 else throw ConfigError("grpo.normalization must be per_token or drgrpo");
               },
               [ptr]() {
                 return std::string(*ptr == Normalization::kPerToken ? "per_token" : "drgrpo");
               }};
}

Field enum_field(RewardKind* ptr) {
  return Field{[ptr](const std::string& text) {
                 if (text == "hard") *ptr = RewardKind::kHard;
                 else if (text == "nuanced") *ptr = RewardKind::kNuanced;
                 else throw ConfigError("grpo.reward must be hard or nuanced");
               },
               [ptr]() { return std::string(*ptr == RewardKind::kHard ? "hard" : "nuanced"); }};
}

Field enum_field(Dialect* ptr) {
  return Field{[ptr](const std::string& text) {
                 if (text == "think_solution") *ptr = Dialect::kThinkSolution;
                 else if (text == "analysis_conclusion") *ptr = Dialect::kAnalysisConclusion;
                 else throw ConfigError("eval.dialect must be think_solution or analysis_conclusion");
               },
               [ptr]() {
                 return std::string(*ptr == Dialect::kThinkSolution ? "think_solution"
                                                                    : "analysis_conclusion");
               }};
}

Field labels_field(std::string* ptr) {
  return Field{[ptr](const std::string& text) {
                 if (text != "full14" && text != "nih9") {
                   throw ConfigError("eval.labels must be full14 or nih9");
                 }
                 *ptr = text;
               },
               [ptr]() { return *ptr; }};
}

Schema make_schema(RunConfig* c) {
  Schema s;
  auto& task = s.section("task");
  task.emplace_back("n", field(&c->task.n, "task.n"));
  task.emplace_back("d", field(&c->task.d, "task.d"));
  task.emplace_back("seed", field(&c->task.seed, "task.seed"));

  auto& sampler = s.section("sampler");
  sampler.emplace_back("n_sft", field(&c->sampler.n_sft, "sampler.n_sft"));
  sampler.emplace_back("n_rl", field(&c->sampler.n_rl, "sampler.n_rl"));
  sampler.emplace_back("min_fraction", field(&c->sampler.min_fraction, "sampler.min_fraction"));
  sampler.emplace_back("overrepresentation_penalty",
                       field(&c->sampler.overrepresentation_penalty,
                             "sampler.overrepresentation_penalty"));
  sampler.emplace_back("seed", field(&c->sampler.seed, "sampler.seed"));

  auto& sft = s.section("sft");
  sft.emplace_back("max_epochs", field(&c->sft.max_epochs, "sft.max_epochs"));
  sft.emplace_back("patience", field(&c->sft.patience, "sft.patience"));
  sft.emplace_back("batch_size", field(&c->sft.batch_size, "sft.batch_size"));
  sft.emplace_back("learning_rate", field(&c->sft.learning_rate, "sft.learning_rate"));
  sft.emplace_back("weight_decay", field(&c->sft.weight_decay, "sft.weight_decay"));
  sft.emplace_back("grad_clip", field(&c->sft.grad_clip, "sft.grad_clip"));
  sft.emplace_back("warmup_frac", field(&c->sft.warmup_frac, "sft.warmup_frac"));
  sft.emplace_back("val_fraction", field(&c->sft.val_fraction, "sft.val_fraction"));
  sft.emplace_back("seed", field(&c->sft.seed, "sft.seed"));

  auto& grpo = s.section("grpo");
  grpo.emplace_back("group_size", field(&c->grpo.group_size, "grpo.group_size"));
  grpo.emplace_back("temperature", field(&c->grpo.temperature, "grpo.temperature"));
  grpo.emplace_back("top_p", field(&c->grpo.top_p, "grpo.top_p"));
  grpo.emplace_back("kl_coef", field(&c->grpo.kl_coef, "grpo.kl_coef"));
  grpo.emplace_back("clip_low", field(&c->grpo.clip_low, "grpo.clip_low"));
  grpo.emplace_back("clip_high", field(&c->grpo.clip_high, "grpo.clip_high"));
  grpo.emplace_back("normalization", enum_field(&c->grpo.normalization));
  grpo.emplace_back("advantage_std_floor",
                    field(&c->grpo.advantage_std_floor, "grpo.advantage_std_floor"));
  grpo.emplace_back("learning_rate", field(&c->grpo.learning_rate, "grpo.learning_rate"));
  grpo.emplace_back("steps", field(&c->grpo.steps, "grpo.steps"));
  grpo.emplace_back("reward", enum_field(&c->grpo.reward));
  grpo.emplace_back("seed", field(&c->grpo.seed, "grpo.seed"));
  grpo.emplace_back("max_len", field(&c->grpo.max_len, "grpo.max_len"));
  grpo.emplace_back("batch_observations",
                    field(&c->grpo.batch_observations, "grpo.batch_observations"));
  grpo.emplace_back("checkpoint_interval",
                    field(&c->grpo.checkpoint_interval, "grpo.checkpoint_interval"));

  auto& hard = s.section("rewards.hard");
  hard.emplace_back("min_length_tokens",
                    field(&c->hard.min_length_tokens, "rewards.hard.min_length_tokens"));
  hard.emplace_back("length_penalty",
                    field(&c->hard.length_penalty, "rewards.hard.length_penalty"));

  auto& nuanced = s.section("rewards.nuanced");
  nuanced.emplace_back("exact_match_bonus",
                       field(&c->nuanced.exact_match_bonus, "rewards.nuanced.exact_match_bonus"));
  nuanced.emplace_back("recall_scale",
                       field(&c->nuanced.recall_scale, "rewards.nuanced.recall_scale"));
  nuanced.emplace_back("precision_scale",
                       field(&c->nuanced.precision_scale, "rewards.nuanced.precision_scale"));
  nuanced.emplace_back("invalid_label_penalty",
                       field(&c->nuanced.invalid_label_penalty,
                             "rewards.nuanced.invalid_label_penalty"));
  nuanced.emplace_back("duplicate_penalty",
                       field(&c->nuanced.duplicate_penalty, "rewards.nuanced.duplicate_penalty"));
  nuanced.emplace_back("collapse_penalty",
                       field(&c->nuanced.collapse_penalty, "rewards.nuanced.collapse_penalty"));
  nuanced.emplace_back("excess_repetition_penalty",
                       field(&c->nuanced.excess_repetition_penalty,
                             "rewards.nuanced.excess_repetition_penalty"));
  nuanced.emplace_back("dominance_threshold",
                       field(&c->nuanced.dominance_threshold,
                             "rewards.nuanced.dominance_threshold"));
  nuanced.emplace_back("window_size",
                       field(&c->nuanced.window_size, "rewards.nuanced.window_size"));
  nuanced.emplace_back("fp_base_penalty",
                       field(&c->nuanced.fp_base_penalty, "rewards.nuanced.fp_base_penalty"));
  nuanced.emplace_back("format_penalty",
                       field(&c->nuanced.format_penalty, "rewards.nuanced.format_penalty"));
  nuanced.emplace_back("extraneous_penalty",
                       field(&c->nuanced.extraneous_penalty, "rewards.nuanced.extraneous_penalty"));

  auto& eval = s.section("eval");
  eval.emplace_back("labels", labels_field(&c->eval.labels));
  eval.emplace_back("dialect", enum_field(&c->eval.dialect));

  auto& io = s.section("io");
  io.emplace_back("out_dir", field(&c->io.out_dir, "io.out_dir"));
  io.emplace_back("pool", field(&c->io.pool, "io.pool"));
  io.emplace_back("sft_set", field(&c->io.sft_set, "io.sft_set"));
  io.emplace_back("rl_set", field(&c->io.rl_set, "io.rl_set"));
  io.emplace_back("coverage", field(&c->io.coverage, "io.coverage"));
  io.emplace_back("sft_checkpoint", field(&c->io.sft_checkpoint, "io.sft_checkpoint"));
  io.emplace_back("grpo_checkpoint", field(&c->io.grpo_checkpoint, "io.grpo_checkpoint"));
  io.emplace_back("stats_file", field(&c->io.stats_file, "io.stats_file"));
  return s;
}

}  // namespace

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig config;
  Schema schema = make_schema(&config);

  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim_copy(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim_copy(s.substr(1, s.size() - 2));
      bool known = false;
      for (auto& [name, fields] : schema.sections) known |= (name == section);
      if (!known) throw ConfigError("unknown section [" + section + "]");
      continue;
    }
    const size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim_copy(s.substr(0, eq));
    const std::string value = trim_copy(s.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section");

    bool found = false;
    for (auto& [name, fields] : schema.sections) {
      if (name != section) continue;
      for (auto& [k, f] : fields) {
        if (k == key) {
          f.set(value);
          found = true;
          break;
        }
      }
    }
    if (!found) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  }
  return config;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

std::string RunConfig::to_ini() const {
  RunConfig* self = const_cast<RunConfig*>(this);
  Schema schema = make_schema(self);
  std::ostringstream out;
  for (auto& [name, fields] : schema.sections) {
    out << "[" << name << "]\n";
    for (auto& [key, f] : fields) {
      out << key << " = " << f.get() << "\n";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace chexlab
