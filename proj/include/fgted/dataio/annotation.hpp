#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgted/dataio/tokenize.hpp"

namespace fgted::dataio {

enum class ErrorType { kAddition, kOmission };

std::string_view error_type_name(ErrorType type);
ErrorType error_type_from_name(std::string_view name);
// Side on which an error type is labelled in normalized records.
Side canonical_side(ErrorType type);

struct ErrorSpan {
  Side side = Side::kHyp;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  ErrorType type = ErrorType::kAddition;
  int annotators = 1;

  bool operator==(const ErrorSpan&) const = default;
};

struct AnnotatedExample {
  std::string id;
  std::vector<std::string> src;
  std::vector<std::string> hyp;
  std::vector<ErrorSpan> spans;

  const std::vector<std::string>& words(Side side) const {
    return side == Side::kHyp ? hyp : src;
  }
  bool operator==(const AnnotatedExample&) const = default;
};

// Canonical single-line JSON encoding (fixed key order, no whitespace).
std::string to_json_line(const AnnotatedExample& example);
// Throws DataError naming the offending field and line.
AnnotatedExample annotated_from_json_line(std::string_view line, std::size_t line_no);

struct ReadResult {
  std::vector<AnnotatedExample> examples;
  std::vector<std::string> problems;  // "line N: ..." for each rejected line
};

// Parses every line; rejected lines are reported rather than thrown.
ReadResult read_examples_report(const std::filesystem::path& path);
// Throws DataError listing all problems if any line is malformed.
std::vector<AnnotatedExample> read_examples(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path,
                    std::span<const AnnotatedExample> examples);

struct ValidationResult {
  AnnotatedExample example;
  std::vector<std::string> violations;

  bool clean() const { return violations.empty(); }
};

// Flags spans whose side contradicts the normalized convention (addition on
// the hypothesis, omission on the source). Such records cannot be repaired
// automatically, so they are returned unchanged alongside the violations.
ValidationResult validate_format(const AnnotatedExample& example);

inline constexpr std::string_view kLegacyOmission = "legacy omission placement";
inline constexpr std::string_view kLegacyAddition = "legacy addition placement";

// Annotator-merged per-word weights: weight(type, side)[w] is the number of
// annotators whose spans of that type cover word w on that side.
class GoldView {
 public:
  explicit GoldView(const AnnotatedExample& example);

  const std::vector<double>& weights(ErrorType type, Side side) const {
    return weights_[static_cast<std::size_t>(type)][static_cast<std::size_t>(side)];
  }
  std::size_t word_count(Side side) const { return weights(ErrorType::kAddition, side).size(); }
  // Binary word label on one side: 1 if any span of any type covers it.
  std::vector<int> binary_labels(Side side) const;

 private:
  std::array<std::array<std::vector<double>, 2>, 2> weights_;
};

struct ExamplePredictions {
  std::string id;
  std::vector<WordPrediction> preds;
};

std::string to_json_line(const ExamplePredictions& predictions);
std::vector<ExamplePredictions> read_predictions(const std::filesystem::path& path,
                                                 double threshold = kDefaultDecisionThreshold);
void write_predictions(const std::filesystem::path& path,
                       std::span<const ExamplePredictions> predictions);

// Reads every line of a UTF-8 text file (without terminators).
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace fgted::dataio
