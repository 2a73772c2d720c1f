#pragma once

#include <span>
#include <vector>

#include "fgted/model/encoder.hpp"
#include "fgted/numerics/rng.hpp"

namespace fgted::losses {

using numerics::Tape;
using numerics::Tensor;

inline constexpr double kMaskRate = 0.15;

struct MaskedSequence {
  model::SegmentedInput input;          // tokens after corruption
  std::vector<std::size_t> positions;   // corrupted rows, ascending
  std::vector<int> targets;             // original ids at those rows
};

// Selects round(rate * n) of the n non-special tokens (at least one) without
// replacement; each becomes [MASK] with probability 0.8, a random non-special
// id with probability 0.1, or stays unchanged.
MaskedSequence mask_tokens(const model::SegmentedInput& input, std::size_t vocab_size, Rng& rng,
                           double rate = kMaskRate);

// Mean cross-entropy of the MLM head at the corrupted rows over a batch of
// single-sentence sequences. Throws UsageError when nothing is masked.
Tensor mlm_loss(Tape& tape, const model::EncoderParams& params,
                std::span<const MaskedSequence> batch, model::DropoutStream* dropout = nullptr);

// Same objective over pair-layout sequences with Full attention.
Tensor tlm_loss(Tape& tape, const model::EncoderParams& params,
                std::span<const MaskedSequence> batch, model::DropoutStream* dropout = nullptr);

// Mean of the hidden rows [begin, end) as a 1 x d row.
Tensor mean_pool(Tape& tape, const Tensor& hidden, std::size_t begin, std::size_t end);

// Symmetric in-batch contrastive loss over cosine similarities: row i of
// src_embeddings and row i of hyp_embeddings are the positive pair.
Tensor xlco_loss(Tape& tape, const Tensor& src_embeddings, const Tensor& hyp_embeddings,
                 double temperature);

}  // namespace fgted::losses
