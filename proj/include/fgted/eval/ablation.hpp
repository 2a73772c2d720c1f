#pragma once

#include <span>
#include <vector>

#include "fgted/dataio/annotation.hpp"
#include "fgted/eval/metrics.hpp"
#include "fgted/model/config.hpp"

namespace fgted::eval {

struct AblationResult {
  std::vector<double> probs;  // every word of every example, HYP then SRC
  Histogram histogram;
};

// Word error probabilities with the two segments unable to attend to each
// other, bucketed. A model that relies on cross-lingual evidence should call
// every word an error here.
AblationResult ablation_run(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                            std::span<const dataio::AnnotatedExample> examples,
                            std::size_t buckets = 20);

}  // namespace fgted::eval
