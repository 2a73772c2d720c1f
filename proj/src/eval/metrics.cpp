#include "fgted/eval/metrics.hpp"

#include <cmath>
#include <map>

#include "fgted/numerics/errors.hpp"

namespace fgted::eval {

using dataio::Side;

PRF prf_from_counts(double tp, double fp, double fn) {
  PRF r;
  r.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  const double s = r.precision + r.recall;
  r.f1 = s > 0.0 ? 2.0 * r.precision * r.recall / s : 0.0;
  return r;
}

WeightedCounts weighted_counts(std::span<const double> gold_weights,
                               std::span<const int> predicted) {
  if (gold_weights.size() != predicted.size()) {
    throw UsageError("gold and predicted word counts differ");
  }
  WeightedCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool pos = predicted[i] != 0;
    if (gold_weights[i] > 0.0) {
      (pos ? c.tp : c.fn) += gold_weights[i];
    } else if (pos) {
      c.fp += 1.0;
    }
  }
  return c;
}

PRF weighted_prf(std::span<const dataio::AnnotatedExample> gold,
                 std::span<const dataio::ExamplePredictions> predictions,
                 dataio::ErrorType type, Side side) {
  if (dataio::canonical_side(type) != side) {
    throw UsageError(std::string(dataio::error_type_name(type)) + " errors are not scored on " +
                     std::string(dataio::side_name(side)));
  }
  std::map<std::string, const dataio::ExamplePredictions*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.id, &p).second) throw UsageError("duplicate prediction id " + p.id);
  }
  if (by_id.size() != gold.size()) throw UsageError("prediction and gold example sets differ");

  WeightedCounts total;
  for (const auto& ex : gold) {
    auto it = by_id.find(ex.id);
    if (it == by_id.end()) throw UsageError("no predictions for example " + ex.id);
    const dataio::GoldView view(ex);
    const auto& weights = view.weights(type, side);
    std::vector<int> predicted(weights.size(), 0);
    for (const auto& wp : it->second->preds) {
      if (wp.side != side) continue;
      if (wp.index >= predicted.size()) {
        throw DataError("prediction index out of range in example " + ex.id);
      }
      predicted[wp.index] = wp.label;
    }
    const auto c = weighted_counts(weights, predicted);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return prf_from_counts(total.tp, total.fp, total.fn);
}

double avg_f1(std::span<const double> cells) {
  if (cells.empty()) throw UsageError("avg_f1 needs at least one cell");
  double s = 0.0;
  for (double c : cells) s += c;
  return s / static_cast<double>(cells.size());
}

double avg_f1(const std::map<std::string, double>& cells, std::span<const std::string> required) {
  std::vector<double> v;
  for (const auto& name : required) {
    auto it = cells.find(name);
    if (it == cells.end()) throw UsageError("missing F1 cell " + name);
    v.push_back(it->second);
  }
  return avg_f1(v);
}

double round1(double x) { return std::round(x * 10.0) / 10.0; }

MccReport mcc_report(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw UsageError("mcc: label sequences differ in length");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool g = gold[i] != 0;
    if (p && g) {
      ++tp;
    } else if (!p && !g) {
      ++tn;
    } else if (p) {
      ++fp;
    } else {
      ++fn;
    }
  }
  MccReport r;
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  r.mcc = denom > 0.0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
  r.f1_bad = prf_from_counts(tp, fp, fn).f1;
  r.f1_ok = prf_from_counts(tn, fn, fp).f1;
  return r;
}

double segment_score(std::span<const double> word_probs) {
  if (word_probs.empty()) throw UsageError("segment_score needs at least one word");
  double s = 0.0;
  for (double p : word_probs) s += p;
  return -s / static_cast<double>(word_probs.size());
}

double kendall_tau_like(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw UsageError("kendall_tau_like needs at least one pair");
  double concordant = 0.0;
  for (const auto& [good, bad] : pairs) concordant += good > bad ? 1.0 : 0.0;
  const double n = static_cast<double>(pairs.size());
  return (concordant - (n - concordant)) / n;
}

Histogram prob_histogram(std::span<const double> probs, std::size_t buckets) {
  if (buckets == 0) throw UsageError("histogram needs at least one bucket");
  Histogram h;
  h.counts.assign(buckets, 0);
  const double b = static_cast<double>(buckets);
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("probability outside [0, 1]");
    auto i = std::min(buckets - 1, static_cast<std::size_t>(p * b));
    // Settle edge cases against the exact edges i / b.
    while (i > 0 && p < static_cast<double>(i) / b) --i;
    while (i + 1 < buckets && p >= static_cast<double>(i + 1) / b) ++i;
    ++h.counts[i];
  }
  h.proportions.assign(buckets, 0.0);
  if (!probs.empty()) {
    for (std::size_t i = 0; i < buckets; ++i) {
      h.proportions[i] = static_cast<double>(h.counts[i]) / static_cast<double>(probs.size());
    }
  }
  return h;
}

}  // namespace fgted::eval
