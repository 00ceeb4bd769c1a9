#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chexlab {

inline constexpr int kNumLabels = 14;

struct Label {
  int id;
  std::string_view name;
};

// Set of canonical labels backed by a 14-bit mask.
class LabelSet {
 public:
  LabelSet() = default;

  static LabelSet from_bits(uint16_t bits) {
    LabelSet s;
    s.bits_ = static_cast<uint16_t>(bits & kMask);
    return s;
  }

  static LabelSet of(std::initializer_list<int> ids) {
    LabelSet s;
    for (int id : ids) s.insert(id);
    return s;
  }

  bool contains(int id) const { return (bits_ >> id) & 1u; }
  void insert(int id) { bits_ |= static_cast<uint16_t>(1u << id); }
  void erase(int id) { bits_ &= static_cast<uint16_t>(~(1u << id)); }

  int size() const { return std::popcount(bits_); }
  bool empty() const { return bits_ == 0; }
  uint16_t bits() const { return bits_; }

  std::vector<int> ids() const {
    std::vector<int> out;
    out.reserve(size());
    for (uint16_t m = bits_; m; m &= static_cast<uint16_t>(m - 1)) {
      out.push_back(std::countr_zero(m));
    }
    return out;
  }

  friend bool operator==(LabelSet a, LabelSet b) { return a.bits_ == b.bits_; }
  friend bool operator!=(LabelSet a, LabelSet b) { return a.bits_ != b.bits_; }
  friend LabelSet operator&(LabelSet a, LabelSet b) { return from_bits(a.bits_ & b.bits_); }
  friend LabelSet operator|(LabelSet a, LabelSet b) { return from_bits(a.bits_ | b.bits_); }
  friend LabelSet operator-(LabelSet a, LabelSet b) {
    return from_bits(a.bits_ & static_cast<uint16_t>(~b.bits_));
  }

 private:
  static constexpr uint16_t kMask = (1u << kNumLabels) - 1;
  uint16_t bits_ = 0;
};

// The 14 canonical labels in fixed id order.
const std::array<Label, kNumLabels>& canonical_labels();

// The 9 labels shared with the NIH label space, in canonical order.
const std::array<Label, 9>& nih_compatible_subset();

// Lowercase, trim, and collapse internal whitespace runs to single spaces.
std::string normalize_label_name(std::string_view text);

// Exact match against the canonical lexicon under normalize_label_name.
// No fuzzy matching; anything else is a no-match.
std::optional<Label> parse_label(std::string_view text);

// Canonical names of the set's members, joined by `sep`, in id order.
std::string label_names_joined(LabelSet set, std::string_view sep);

// Strict conversion from canonical name strings; throws on unknown names.
LabelSet labelset_from_names(std::span<const std::string> names);

struct LabelStats {
  std::array<double, kNumLabels> prevalence{};
};

// Per-label fraction of pool entries containing the label. Throws on an
// empty pool.
LabelStats label_stats(std::span<const LabelSet> pool);

}  // namespace chexlab
