#include "chexlab/parser.hpp"

#include <algorithm>
#include <cctype>
#include <vector>

namespace chexlab {
namespace {

bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool all_whitespace(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_ws);
}

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_ws(s[b])) ++b;
  while (e > b && is_ws(s[e - 1])) --e;
  return s.substr(b, e - b);
}

int whitespace_token_count(std::string_view s) {
  int count = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_ws(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++count;
    }
  }
  return count;
}

size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  size_t count = 0;
  size_t pos = haystack.find(needle);
  while (pos != std::string_view::npos) {
    ++count;
    pos = haystack.find(needle, pos + needle.size());
  }
  return count;
}

// Case-insensitive search for `key` followed by optional whitespace and a
// colon. Returns the position of the key, and sets `value_begin` to the
// first character after the colon.
size_t find_key(std::string_view text, std::string_view key, size_t from,
                size_t* value_begin) {
  auto lower = [](char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  };
  for (size_t i = from; i + key.size() <= text.size(); ++i) {
    size_t k = 0;
    while (k < key.size() && lower(text[i + k]) == key[k]) ++k;
    if (k != key.size()) continue;
    size_t j = i + key.size();
    while (j < text.size() && is_ws(text[j])) ++j;
    if (j < text.size() && text[j] == ':') {
      *value_begin = j + 1;
      return i;
    }
  }
  return std::string_view::npos;
}

void extract_labels(std::string_view solution, ParsedOutput* out) {
  size_t start = 0;
  for (size_t i = 0; i <= solution.size(); ++i) {
    if (i == solution.size() || solution[i] == ',' || solution[i] == '\n') {
      std::string_view fragment = trim(solution.substr(start, i - start));
      start = i + 1;
      if (fragment.empty()) continue;
      auto label = parse_label(fragment);
      if (!label) {
        ++out->invalid_label_count;
      } else if (out->predicted.contains(label->id)) {
        ++out->duplicate_count;
      } else {
        out->predicted.insert(label->id);
      }
    }
  }
}

void parse_think_solution(std::string_view text, ParsedOutput* out) {
  static constexpr std::string_view kThinkOpen = "<think>";
  static constexpr std::string_view kThinkClose = "</think>";
  static constexpr std::string_view kSolOpen = "<solution>";
  static constexpr std::string_view kSolClose = "</solution>";

  if (count_occurrences(text, kThinkOpen) != 1 ||
      count_occurrences(text, kThinkClose) != 1 ||
      count_occurrences(text, kSolOpen) != 1 ||
      count_occurrences(text, kSolClose) != 1) {
    return;
  }
  const size_t to = text.find(kThinkOpen);
  const size_t tc = text.find(kThinkClose);
  const size_t so = text.find(kSolOpen);
  const size_t sc = text.find(kSolClose);
  if (!(to < tc && tc < so && so < sc)) return;

  out->valid = true;
  out->reasoning_text = std::string(trim(text.substr(to + kThinkOpen.size(), tc - to - kThinkOpen.size())));
  std::string_view solution = text.substr(so + kSolOpen.size(), sc - so - kSolOpen.size());
  out->solution_text = std::string(trim(solution));
  out->extraneous_text = !all_whitespace(text.substr(0, to)) ||
                         !all_whitespace(text.substr(tc + kThinkClose.size(), so - tc - kThinkClose.size())) ||
                         !all_whitespace(text.substr(sc + kSolClose.size()));
  extract_labels(solution, out);
}

void parse_analysis_conclusion(std::string_view text, ParsedOutput* out) {
  std::string_view body = trim(text);
  bool braced = false;
  std::string_view outer_trail;
  if (!body.empty() && body.front() == '{') {
    size_t close = body.rfind('}');
    if (close == std::string_view::npos) return;  // opening brace never closed
    braced = true;
    outer_trail = body.substr(close + 1);
    body = body.substr(1, close - 1);
  }

  size_t analysis_value = 0, conclusion_value = 0;
  const size_t analysis_key = find_key(body, "analysis", 0, &analysis_value);
  if (analysis_key == std::string_view::npos) return;
  const size_t conclusion_key = find_key(body, "conclusion", analysis_value, &conclusion_value);
  if (conclusion_key == std::string_view::npos) return;

  out->valid = true;
  std::string_view reasoning = body.substr(analysis_value, conclusion_key - analysis_value);
  // Drop the separator between the analysis value and the conclusion key.
  reasoning = trim(reasoning);
  if (!reasoning.empty() && (reasoning.back() == ',' || reasoning.back() == ';')) {
    reasoning = trim(reasoning.substr(0, reasoning.size() - 1));
  }
  std::string_view solution = body.substr(conclusion_value);
  out->reasoning_text = std::string(reasoning);
  out->solution_text = std::string(trim(solution));
  out->extraneous_text = !all_whitespace(body.substr(0, analysis_key)) ||
                         (braced && !all_whitespace(outer_trail));
  extract_labels(solution, out);
}

}  // namespace

ParsedOutput parse_completion(std::string_view text, const FormatSpec& spec) {
  ParsedOutput out;
  out.token_length = whitespace_token_count(text);
  switch (spec.dialect) {
    case Dialect::kThinkSolution:
      parse_think_solution(text, &out);
      break;
    case Dialect::kAnalysisConclusion:
      parse_analysis_conclusion(text, &out);
      break;
  }
  return out;
}

bool is_valid_format(std::string_view text, const FormatSpec& spec) {
  return parse_completion(text, spec).valid;
}

}  // namespace chexlab
