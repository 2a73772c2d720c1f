#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fgted/dataio/annotation.hpp"

namespace fgted::eval {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Precision and recall are 0 when their denominators are 0.
PRF prf_from_counts(double tp, double fp, double fn);

struct WeightedCounts {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

// One side of one example. weights[w] > 0 marks a gold error word carrying
// that many annotators; predicted positives outside gold count 1 each.
WeightedCounts weighted_counts(std::span<const double> gold_weights,
                               std::span<const int> predicted);

// Annotator-weighted word PRF for one error type on its canonical side,
// summed over all examples. Predictions are matched by id; words without a
// prediction count as negative. Throws UsageError if the side does not match
// the type or the id sets differ.
PRF weighted_prf(std::span<const dataio::AnnotatedExample> gold,
                 std::span<const dataio::ExamplePredictions> predictions,
                 dataio::ErrorType type, dataio::Side side);

double avg_f1(std::span<const double> cells);
// Mean over exactly the named cells; throws UsageError if one is missing.
double avg_f1(const std::map<std::string, double>& cells, std::span<const std::string> required);

// Half away from zero at one decimal, as printed in tables.
double round1(double x);

struct MccReport {
  double mcc = 0.0;
  double f1_ok = 0.0;
  double f1_bad = 0.0;
};

// Labels are 1 for error. MCC is 0 whenever a marginal is empty.
MccReport mcc_report(std::span<const int> predicted, std::span<const int> gold);

// Negative mean error probability over every word of both sides.
double segment_score(std::span<const double> word_probs);

// (concordant - discordant) / n over (good, incorrect) score pairs; a tie is
// discordant.
double kendall_tau_like(std::span<const std::pair<double, double>> pairs);

struct Histogram {
  std::vector<double> proportions;
  std::vector<std::size_t> counts;
};

// Buckets [i/b, (i+1)/b) with the last one closed at 1. Throws DataError for
// values outside [0, 1].
Histogram prob_histogram(std::span<const double> probs, std::size_t buckets = 20);

}  // namespace fgted::eval
