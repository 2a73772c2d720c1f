#pragma once

#include <span>
#include <string>
#include <vector>

#include "fgted/dataio/annotation.hpp"
#include "fgted/model/encoder.hpp"

namespace fgted::eval {

// Per-word error probabilities (max over subwords) for one pair.
struct WordProbs {
  std::vector<double> hyp;
  std::vector<double> src;

  std::vector<double> all() const;
};

WordProbs predict_word_probs(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                             std::span<const std::string> hyp, std::span<const std::string> src,
                             model::AttentionMode mode = model::AttentionMode::kFull);

dataio::ExamplePredictions to_predictions(std::string id, const WordProbs& probs,
                                          double threshold = dataio::kDefaultDecisionThreshold);

}  // namespace fgted::eval
