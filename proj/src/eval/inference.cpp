#include "fgted/eval/inference.hpp"

namespace fgted::eval {

using dataio::Side;

std::vector<double> WordProbs::all() const {
  std::vector<double> out = hyp;
  out.insert(out.end(), src.begin(), src.end());
  return out;
}

WordProbs predict_word_probs(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                             std::span<const std::string> hyp, std::span<const std::string> src,
                             model::AttentionMode mode) {
  const auto input = model::make_pair_input(vocab, hyp, src, mode);
  auto tape = numerics::Tape::inference();
  const auto hidden = model::encode(tape, params, input);
  const auto probs = tape.row_softmax(model::classify_tokens(tape, params, hidden));
  std::vector<dataio::SubwordPrediction> sub(input.length());
  for (std::size_t i = 0; i < sub.size(); ++i) sub[i].prob_error = probs.at(i, 1);
  const auto words = dataio::propagate_to_words(sub, input.word_ids, hyp.size());
  WordProbs out;
  out.hyp.resize(hyp.size());
  out.src.resize(src.size());
  for (const auto& w : words) (w.side == Side::kHyp ? out.hyp : out.src)[w.index] = w.prob_error;
  return out;
}

dataio::ExamplePredictions to_predictions(std::string id, const WordProbs& probs,
                                          double threshold) {
  dataio::ExamplePredictions out;
  out.id = std::move(id);
  for (Side side : {Side::kHyp, Side::kSrc}) {
    const auto& p = side == Side::kHyp ? probs.hyp : probs.src;
    for (std::size_t i = 0; i < p.size(); ++i) {
      out.preds.push_back({side, i, p[i], p[i] >= threshold ? 1 : 0});
    }
  }
  return out;
}

}  // namespace fgted::eval
