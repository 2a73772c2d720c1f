#pragma once

#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "fgted/dataio/annotation.hpp"
#include "fgted/eval/metrics.hpp"

namespace fgted::eval {

// Cell names used for the averaged F1 of a single language pair.
inline constexpr const char* kAdditionCell = "addition";
inline constexpr const char* kOmissionCell = "omission";

struct FgtedScores {
  PRF addition;  // HYP side
  PRF omission;  // SRC side
  double avg_f1 = 0.0;
};

FgtedScores score_fgted(std::span<const dataio::AnnotatedExample> gold,
                        std::span<const dataio::ExamplePredictions> predictions);

// Binary OK/BAD over every word of both sides.
MccReport score_wordqe(std::span<const dataio::AnnotatedExample> gold,
                       std::span<const dataio::ExamplePredictions> predictions);

struct EvalReport {
  std::optional<FgtedScores> fgted;
  std::optional<MccReport> wordqe;
  std::optional<double> tau;
  std::optional<std::size_t> ced_pairs;
  std::optional<Histogram> histogram;
};

enum class ReportStyle { kMachine, kHuman };

// Scores are x100; human style rounds them to one decimal.
nlohmann::ordered_json report_json(const EvalReport& report, ReportStyle style);
// One "key<TAB>value" line per scalar.
std::string report_tsv(const EvalReport& report, ReportStyle style);

}  // namespace fgted::eval
