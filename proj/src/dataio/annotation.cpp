#include "fgted/dataio/annotation.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fgted/numerics/errors.hpp"

namespace fgted::dataio {

using ordered_json = nlohmann::ordered_json;

std::string_view error_type_name(ErrorType type) {
  return type == ErrorType::kAddition ? "addition" : "omission";
}

ErrorType error_type_from_name(std::string_view name) {
  if (name == "addition") return ErrorType::kAddition;
  if (name == "omission") return ErrorType::kOmission;
  throw DataError("type must be \"addition\" or \"omission\", got \"" + std::string(name) + "\"");
}

Side canonical_side(ErrorType type) {
  return type == ErrorType::kAddition ? Side::kHyp : Side::kSrc;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

namespace {

[[noreturn]] void field_error(std::size_t line_no, std::string_view field, std::string_view what) {
  throw DataError("line " + std::to_string(line_no) + ": field \"" + std::string(field) +
                  "\": " + std::string(what));
}

const ordered_json& require(const ordered_json& obj, std::string_view key, std::size_t line_no) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) field_error(line_no, key, "missing");
  return *it;
}

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<std::string_view> known,
                         std::size_t line_no) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || item.key() == k;
    if (!ok) field_error(line_no, item.key(), "unknown field");
  }
}

std::vector<std::string> words_field(const ordered_json& obj, std::string_view key,
                                     std::size_t line_no) {
  const auto& arr = require(obj, key, line_no);
  if (!arr.is_array()) field_error(line_no, key, "expected an array of strings");
  std::vector<std::string> words;
  for (const auto& w : arr) {
    if (!w.is_string()) field_error(line_no, key, "expected an array of strings");
    if (w.get_ref<const std::string&>().empty()) field_error(line_no, key, "empty word");
    words.push_back(w.get<std::string>());
  }
  return words;
}

std::size_t index_field(const ordered_json& obj, std::string_view key, std::size_t line_no) {
  const auto& v = require(obj, key, line_no);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    field_error(line_no, key, "expected a non-negative integer");
  }
  return static_cast<std::size_t>(v.get<long long>());
}

ordered_json parse_object(std::string_view line, std::size_t line_no) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
  }
  if (!obj.is_object()) throw DataError("line " + std::to_string(line_no) + ": expected an object");
  return obj;
}

}  // namespace

std::string to_json_line(const AnnotatedExample& example) {
  ordered_json obj;
  obj["id"] = example.id;
  obj["src"] = example.src;
  obj["hyp"] = example.hyp;
  ordered_json spans = ordered_json::array();
  for (const ErrorSpan& s : example.spans) {
    ordered_json js;
    js["side"] = side_name(s.side);
    js["start"] = s.start;
    js["end"] = s.end;
    js["type"] = error_type_name(s.type);
    js["annotators"] = s.annotators;
    spans.push_back(std::move(js));
  }
  obj["spans"] = std::move(spans);
  return obj.dump();
}

AnnotatedExample annotated_from_json_line(std::string_view line, std::size_t line_no) {
  const ordered_json obj = parse_object(line, line_no);
  reject_unknown_keys(obj, {"id", "src", "hyp", "spans"}, line_no);
  AnnotatedExample ex;
  const auto& id = require(obj, "id", line_no);
  if (!id.is_string()) field_error(line_no, "id", "expected a string");
  ex.id = id.get<std::string>();
  ex.src = words_field(obj, "src", line_no);
  ex.hyp = words_field(obj, "hyp", line_no);
  const auto& spans = require(obj, "spans", line_no);
  if (!spans.is_array()) field_error(line_no, "spans", "expected an array");
  for (const auto& js : spans) {
    if (!js.is_object()) field_error(line_no, "spans", "expected objects");
    reject_unknown_keys(js, {"side", "start", "end", "type", "annotators"}, line_no);
    ErrorSpan s;
    const auto& side = require(js, "side", line_no);
    if (!side.is_string()) field_error(line_no, "side", "expected a string");
    try {
      s.side = side_from_name(side.get<std::string>());
      s.type = error_type_from_name(require(js, "type", line_no).is_string()
                                        ? require(js, "type", line_no).get<std::string>()
                                        : std::string());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    s.start = index_field(js, "start", line_no);
    s.end = index_field(js, "end", line_no);
    const auto& ann = require(js, "annotators", line_no);
    if (!ann.is_number_integer() || ann.get<long long>() < 1) {
      field_error(line_no, "annotators", "expected a positive integer");
    }
    s.annotators = static_cast<int>(ann.get<long long>());
    if (s.end <= s.start) field_error(line_no, "end", "end must be greater than start");
    if (s.end > ex.words(s.side).size()) {
      field_error(line_no, "end", "span exceeds the " + std::string(side_name(s.side)) + " length");
    }
    ex.spans.push_back(s);
  }
  return ex;
}

ReadResult read_examples_report(const std::filesystem::path& path) {
  ReadResult result;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      result.examples.push_back(annotated_from_json_line(lines[i], i + 1));
    } catch (const DataError& e) {
      result.problems.emplace_back(e.what());
    }
  }
  return result;
}

std::vector<AnnotatedExample> read_examples(const std::filesystem::path& path) {
  ReadResult result = read_examples_report(path);
  if (!result.problems.empty()) {
    std::ostringstream os;
    os << path.string() << ": " << result.problems.size() << " malformed line(s)";
    for (const auto& p : result.problems) os << "\n  " << p;
    throw DataError(os.str());
  }
  return std::move(result.examples);
}

void write_examples(const std::filesystem::path& path, std::span<const AnnotatedExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& ex : examples) out << to_json_line(ex) << '\n';
}

ValidationResult validate_format(const AnnotatedExample& example) {
  ValidationResult result{example, {}};
  for (std::size_t i = 0; i < example.spans.size(); ++i) {
    const ErrorSpan& s = example.spans[i];
    if (s.side == canonical_side(s.type)) continue;
    const std::string_view kind =
        s.type == ErrorType::kOmission ? kLegacyOmission : kLegacyAddition;
    result.violations.push_back(std::string(kind) + " (span " + std::to_string(i) + ")");
  }
  return result;
}

GoldView::GoldView(const AnnotatedExample& example) {
  for (auto& per_type : weights_) {
    per_type[static_cast<std::size_t>(Side::kHyp)].assign(example.hyp.size(), 0.0);
    per_type[static_cast<std::size_t>(Side::kSrc)].assign(example.src.size(), 0.0);
  }
  for (const ErrorSpan& s : example.spans) {
    auto& w = weights_[static_cast<std::size_t>(s.type)][static_cast<std::size_t>(s.side)];
    if (s.end > w.size() || s.start >= s.end) {
      throw DataError(example.id + ": span out of range");
    }
    for (std::size_t i = s.start; i < s.end; ++i) w[i] += s.annotators;
  }
}

std::vector<int> GoldView::binary_labels(Side side) const {
  const auto& a = weights(ErrorType::kAddition, side);
  const auto& o = weights(ErrorType::kOmission, side);
  std::vector<int> labels(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) labels[i] = (a[i] > 0.0 || o[i] > 0.0) ? 1 : 0;
  return labels;
}

std::string to_json_line(const ExamplePredictions& predictions) {
  ordered_json obj;
  obj["id"] = predictions.id;
  ordered_json preds = ordered_json::array();
  for (const auto& p : predictions.preds) {
    ordered_json jp;
    jp["side"] = side_name(p.side);
    jp["index"] = p.index;
    jp["prob"] = p.prob_error;
    preds.push_back(std::move(jp));
  }
  obj["preds"] = std::move(preds);
  return obj.dump();
}

std::vector<ExamplePredictions> read_predictions(const std::filesystem::path& path,
                                                 double threshold) {
  std::vector<ExamplePredictions> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t line_no = i + 1;
    const ordered_json obj = parse_object(lines[i], line_no);
    reject_unknown_keys(obj, {"id", "preds"}, line_no);
    ExamplePredictions ep;
    const auto& id = require(obj, "id", line_no);
    if (!id.is_string()) field_error(line_no, "id", "expected a string");
    ep.id = id.get<std::string>();
    const auto& preds = require(obj, "preds", line_no);
    if (!preds.is_array()) field_error(line_no, "preds", "expected an array");
    for (const auto& jp : preds) {
      if (!jp.is_object()) field_error(line_no, "preds", "expected objects");
      reject_unknown_keys(jp, {"side", "index", "prob"}, line_no);
      WordPrediction wp;
      const auto& side = require(jp, "side", line_no);
      if (!side.is_string()) field_error(line_no, "side", "expected a string");
      try {
        wp.side = side_from_name(side.get<std::string>());
      } catch (const DataError& e) {
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
      }
      wp.index = index_field(jp, "index", line_no);
      const auto& prob = require(jp, "prob", line_no);
      if (!prob.is_number()) field_error(line_no, "prob", "expected a number");
      wp.prob_error = prob.get<double>();
      if (!(wp.prob_error >= 0.0 && wp.prob_error <= 1.0)) {
        field_error(line_no, "prob", "must lie in [0, 1]");
      }
      wp.label = wp.prob_error >= threshold ? 1 : 0;
      ep.preds.push_back(wp);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

void write_predictions(const std::filesystem::path& path,
                       std::span<const ExamplePredictions> predictions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& p : predictions) out << to_json_line(p) << '\n';
}

}  // namespace fgted::dataio
