#pragma once

#include <string>
#include <string_view>

#include "chexlab/labels.hpp"

namespace chexlab {

// The two structured completion dialects:
//   ThinkSolution      — exactly one <think>...</think> block followed by
//                        exactly one <solution>...</solution> block.
//   AnalysisConclusion — "{analysis: ..., conclusion: ...}"; braces optional,
//                        keys matched case-insensitively.
enum class Dialect { kThinkSolution, kAnalysisConclusion };

struct FormatSpec {
  Dialect dialect = Dialect::kThinkSolution;
};

struct ParsedOutput {
  bool valid = false;
  std::string reasoning_text;
  std::string solution_text;
  LabelSet predicted;
  int invalid_label_count = 0;
  int duplicate_count = 0;
  bool extraneous_text = false;
  // Whitespace-delimited token count of the raw text. Callers that know the
  // true sequence length (e.g. rollouts) overwrite this.
  int token_length = 0;
};

// Validates block structure and extracts the predicted label set. All
// failures are encoded in the result; an invalid parse has an empty
// prediction and zero counts. The solution text is split on commas and
// newlines; fragments that are not canonical labels bump
// invalid_label_count, repeats bump duplicate_count.
ParsedOutput parse_completion(std::string_view text, const FormatSpec& spec);

bool is_valid_format(std::string_view text, const FormatSpec& spec);

}  // namespace chexlab
