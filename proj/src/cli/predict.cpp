#include "fgted/cli/predict.hpp"

#include <json.hpp>

#include "fgted/eval/inference.hpp"
#include "fgted/eval/metrics.hpp"
#include "fgted/numerics/errors.hpp"
#include "fgted/synthgen/pipeline.hpp"

namespace fgted::cli {

using dataio::Side;

std::vector<dataio::AnnotatedExample> read_any_examples(const std::filesystem::path& path) {
  const auto lines = dataio::read_lines(path);
  bool synthetic = false;
  for (const auto& line : lines) {
    if (line.empty()) continue;
    try {
      synthetic = nlohmann::json::parse(line).contains("labels_src");
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    break;
  }
  if (!synthetic) return dataio::read_examples(path);
  std::vector<dataio::AnnotatedExample> out;
  for (const auto& ex : synthgen::read_bilingual(path)) out.push_back(synthgen::to_annotated(ex));
  return out;
}

std::vector<dataio::ExamplePredictions> predict_examples(
    const model::Checkpoint& ck, std::span<const dataio::AnnotatedExample> examples,
    double threshold, model::AttentionMode mode) {
  std::vector<dataio::ExamplePredictions> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back(eval::to_predictions(
        ex.id, eval::predict_word_probs(ck.params, ck.vocab, ex.hyp, ex.src, mode), threshold));
  }
  return out;
}

std::vector<std::pair<double, double>> ced_score_pairs(
    const model::Checkpoint& ck, std::span<const dataio::AnnotatedExample> examples) {
  std::vector<std::pair<double, double>> pairs;
  for (const auto& ex : examples) {
    std::vector<bool> added(ex.hyp.size(), false);
    bool any = false;
    for (const auto& s : ex.spans) {
      if (s.type != dataio::ErrorType::kAddition || s.side != Side::kHyp) continue;
      for (std::size_t i = s.start; i < s.end && i < added.size(); ++i) added[i] = any = true;
    }
    if (!any) continue;
    std::vector<std::string> good;
    for (std::size_t i = 0; i < ex.hyp.size(); ++i) {
      if (!added[i]) good.push_back(ex.hyp[i]);
    }
    if (good.empty()) continue;
    const auto bad_probs = eval::predict_word_probs(ck.params, ck.vocab, ex.hyp, ex.src).all();
    const auto good_probs = eval::predict_word_probs(ck.params, ck.vocab, good, ex.src).all();
    pairs.emplace_back(eval::segment_score(good_probs), eval::segment_score(bad_probs));
  }
  return pairs;
}

}  // namespace fgted::cli
