#include "chexlab/labels.hpp"

#include <cctype>
#include <stdexcept>
#include <unordered_map>

namespace chexlab {

const std::array<Label, kNumLabels>& canonical_labels() {
  static const std::array<Label, kNumLabels> labels = {{
      {0, "Atelectasis"},
      {1, "Cardiomegaly"},
      {2, "Consolidation"},
      {3, "Edema"},
      {4, "Enlarged Cardiomediastinum"},
      {5, "Fracture"},
      {6, "Lung Lesion"},
      {7, "Lung Opacity"},
      {8, "No Finding"},
      {9, "Pleural Effusion"},
      {10, "Pleural Other"},
      {11, "Pneumonia"},
      {12, "Pneumothorax"},
      {13, "Support Devices"},
  }};
  return labels;
}

const std::array<Label, 9>& nih_compatible_subset() {
  static const std::array<Label, 9> subset = {{
      canonical_labels()[0],   // Atelectasis
      canonical_labels()[1],   // Cardiomegaly
      canonical_labels()[2],   // Consolidation
      canonical_labels()[3],   // Edema
      canonical_labels()[6],   // Lung Lesion
      canonical_labels()[8],   // No Finding
      canonical_labels()[10],  // Pleural Other
      canonical_labels()[11],  // Pneumonia
      canonical_labels()[12],  // Pneumothorax
  }};
  return subset;
}

std::string normalize_label_name(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::optional<Label> parse_label(std::string_view text) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    for (const Label& l : canonical_labels()) {
      m.emplace(normalize_label_name(l.name), l.id);
    }
    return m;
  }();
  auto it = index.find(normalize_label_name(text));
  if (it == index.end()) return std::nullopt;
  return canonical_labels()[static_cast<size_t>(it->second)];
}

std::string label_names_joined(LabelSet set, std::string_view sep) {
  std::string out;
  bool first = true;
  for (int id : set.ids()) {
    if (!first) out += sep;
    out += canonical_labels()[static_cast<size_t>(id)].name;
    first = false;
  }
  return out;
}

LabelSet labelset_from_names(std::span<const std::string> names) {
  LabelSet set;
  for (const std::string& name : names) {
    auto label = parse_label(name);
    if (!label) throw std::invalid_argument("unknown label: " + name);
    set.insert(label->id);
  }
  return set;
}

LabelStats label_stats(std::span<const LabelSet> pool) {
  if (pool.empty()) throw std::invalid_argument("label_stats: empty pool");
  LabelStats stats;
  for (const LabelSet& set : pool) {
    for (int id : set.ids()) stats.prevalence[static_cast<size_t>(id)] += 1.0;
  }
  for (double& p : stats.prevalence) p /= static_cast<double>(pool.size());
  return stats;
}

}  // namespace chexlab
