#include "fgted/eval/report.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "fgted/numerics/errors.hpp"

namespace fgted::eval {

using dataio::ErrorType;
using dataio::Side;
using json = nlohmann::ordered_json;

FgtedScores score_fgted(std::span<const dataio::AnnotatedExample> gold,
                        std::span<const dataio::ExamplePredictions> predictions) {
  FgtedScores s;
  s.addition = weighted_prf(gold, predictions, ErrorType::kAddition, Side::kHyp);
  s.omission = weighted_prf(gold, predictions, ErrorType::kOmission, Side::kSrc);
  const double cells[] = {s.addition.f1, s.omission.f1};
  s.avg_f1 = avg_f1(cells);
  return s;
}

MccReport score_wordqe(std::span<const dataio::AnnotatedExample> gold,
                       std::span<const dataio::ExamplePredictions> predictions) {
  std::map<std::string, const dataio::ExamplePredictions*> by_id;
  for (const auto& p : predictions) by_id[p.id] = &p;
  if (by_id.size() != gold.size()) throw UsageError("prediction and gold example sets differ");
  std::vector<int> pred, ref;
  for (const auto& ex : gold) {
    auto it = by_id.find(ex.id);
    if (it == by_id.end()) throw UsageError("no predictions for example " + ex.id);
    const dataio::GoldView view(ex);
    for (Side side : {Side::kHyp, Side::kSrc}) {
      const auto labels = view.binary_labels(side);
      std::vector<int> p(labels.size(), 0);
      for (const auto& wp : it->second->preds) {
        if (wp.side != side) continue;
        if (wp.index >= p.size()) throw DataError("prediction index out of range in " + ex.id);
        p[wp.index] = wp.label;
      }
      ref.insert(ref.end(), labels.begin(), labels.end());
      pred.insert(pred.end(), p.begin(), p.end());
    }
  }
  return mcc_report(pred, ref);
}

namespace {

double shown(double fraction, ReportStyle style) {
  const double v = 100.0 * fraction;
  return style == ReportStyle::kHuman ? round1(v) : v;
}

json prf_json(const PRF& p, ReportStyle style) {
  return {{"precision", shown(p.precision, style)},
          {"recall", shown(p.recall, style)},
          {"f1", shown(p.f1, style)}};
}

}  // namespace

json report_json(const EvalReport& r, ReportStyle style) {
  json j = json::object();
  if (r.fgted) {
    j["cells"] = {{kAdditionCell, prf_json(r.fgted->addition, style)},
                  {kOmissionCell, prf_json(r.fgted->omission, style)}};
    j["avg_f1"] = shown(r.fgted->avg_f1, style);
  }
  if (r.wordqe) {
    j["mcc"] = shown(r.wordqe->mcc, style);
    j["f1_ok"] = shown(r.wordqe->f1_ok, style);
    j["f1_bad"] = shown(r.wordqe->f1_bad, style);
  }
  if (r.tau) j["tau"] = style == ReportStyle::kHuman ? std::round(*r.tau * 1000.0) / 1000.0 : *r.tau;
  if (r.ced_pairs) j["ced_pairs"] = *r.ced_pairs;
  if (r.histogram) j["histogram"] = r.histogram->proportions;
  return j;
}

std::string report_tsv(const EvalReport& r, ReportStyle style) {
  std::ostringstream out;
  out.precision(style == ReportStyle::kHuman ? 6 : 17);
  const json j = report_json(r, style);
  std::function<void(const std::string&, const json&)> emit = [&](const std::string& key,
                                                                  const json& v) {
    if (v.is_object()) {
      for (const auto& [k, sub] : v.items()) emit(key.empty() ? k : key + "." + k, sub);
    } else if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) emit(key + "." + std::to_string(i), v[i]);
    } else if (v.is_number_float()) {
      out << key << '\t' << v.get<double>() << '\n';
    } else {
      out << key << '\t' << v.dump() << '\n';
    }
  };
  emit("", j);
  return out.str();
}

}  // namespace fgted::eval
