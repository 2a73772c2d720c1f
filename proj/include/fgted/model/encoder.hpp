#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fgted/dataio/tokenize.hpp"
#include "fgted/model/config.hpp"
#include "fgted/numerics/rng.hpp"
#include "fgted/numerics/tape.hpp"

namespace fgted::model {

using numerics::Tape;

enum class AttentionMode { kFull, kBlockCross };

// Pair layout: [CLS] h... [SEP] | s... [SEP]. The HYP block is segment 0 and
// the SRC block segment 1; positions restart at 0 in each segment. A single
// sentence is laid out exactly as its own block of the pair.
struct SegmentedInput {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> word_ids;  // global word index (HYP first), -1 for specials
  AttentionMode attention_mode = AttentionMode::kFull;
  std::size_t hyp_word_count = 0;
  std::size_t src_word_count = 0;

  std::size_t length() const { return token_ids.size(); }
  std::vector<std::size_t> positions() const;
  // Token rows [begin, end) of a segment.
  std::pair<std::size_t, std::size_t> segment_range(int segment) const;
};

SegmentedInput pair_layout(std::span<const int> hyp_tokens, std::span<const int> src_tokens,
                           AttentionMode mode);
SegmentedInput single_layout(std::span<const int> tokens, dataio::Side side);

// Word-level builders: every subword token gets its word's global index.
SegmentedInput make_pair_input(const dataio::Vocabulary& vocab,
                               std::span<const std::string> hyp,
                               std::span<const std::string> src, AttentionMode mode);
SegmentedInput make_single_input(const dataio::Vocabulary& vocab,
                                 std::span<const std::string> words, dataio::Side side);

// Source of dropout masks. Each call draws a fresh Bernoulli keep-mask.
class DropoutStream {
 public:
  DropoutStream(std::uint64_t seed, double rate);
  double rate() const { return rate_; }
  Tensor mask(const Shape& shape);

 private:
  Rng rng_;
  double rate_;
};

// Hidden states T x d_model. Pass nullptr for dropout off.
Tensor encode(Tape& tape, const EncoderParams& params, const SegmentedInput& input,
              DropoutStream* dropout = nullptr);

// Token logits T x 2 (column 1 = error).
Tensor classify_tokens(Tape& tape, const EncoderParams& params, const Tensor& hidden,
                       DropoutStream* dropout = nullptr);

// |positions| x vocab_size logits.
Tensor mlm_logits(Tape& tape, const EncoderParams& params, const Tensor& hidden,
                  std::span<const std::size_t> positions);

// exp of the mean masked-token negative log-likelihood over the sentence
// tokens, each scored with only that token replaced by [MASK].
double pseudo_perplexity(const EncoderParams& params, std::span<const int> tokens,
                         dataio::Side side = dataio::Side::kHyp);

}  // namespace fgted::model
