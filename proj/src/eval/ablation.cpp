#include "fgted/eval/ablation.hpp"

#include "fgted/eval/inference.hpp"
#include "fgted/numerics/errors.hpp"

namespace fgted::eval {

AblationResult ablation_run(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                            std::span<const dataio::AnnotatedExample> examples,
                            std::size_t buckets) {
  if (examples.empty()) throw UsageError("ablation needs at least one example");
  AblationResult out;
  for (const auto& ex : examples) {
    const auto p = predict_word_probs(params, vocab, ex.hyp, ex.src, model::AttentionMode::kBlockCross);
    out.probs.insert(out.probs.end(), p.hyp.begin(), p.hyp.end());
    out.probs.insert(out.probs.end(), p.src.begin(), p.src.end());
  }
  out.histogram = prob_histogram(out.probs, buckets);
  return out;
}

}  // namespace fgted::eval
