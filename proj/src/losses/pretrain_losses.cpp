#include "fgted/losses/pretrain_losses.hpp"

#include <algorithm>
#include <cmath>

#include "fgted/numerics/errors.hpp"

namespace fgted::losses {

using dataio::kMaskId;
using dataio::kNumSpecials;

MaskedSequence mask_tokens(const model::SegmentedInput& input, std::size_t vocab_size, Rng& rng,
                           double rate) {
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) {
    throw UsageError("masking needs at least one non-special token id");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < input.length(); ++i) {
    if (!dataio::Vocabulary::is_special(input.token_ids[i])) candidates.push_back(i);
  }
  MaskedSequence out{input, {}, {}};
  if (candidates.empty()) return out;
  const auto n = candidates.size();
  const std::size_t k =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(rate * static_cast<double>(n))), 1, n);
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) std::swap(candidates[i], candidates[i + uniform_index(rng, n - i)]);
  std::sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pos = candidates[i];
    out.positions.push_back(pos);
    out.targets.push_back(input.token_ids[pos]);
    const double u = uniform_unit(rng);
    if (u < 0.8) {
      out.input.token_ids[pos] = kMaskId;
    } else if (u < 0.9) {
      out.input.token_ids[pos] =
          kNumSpecials + static_cast<int>(uniform_index(rng, vocab_size - kNumSpecials));
    }
  }
  return out;
}

namespace {

Tensor masked_ce(Tape& tape, const model::EncoderParams& params,
                 std::span<const MaskedSequence> batch, model::DropoutStream* dropout) {
  const std::size_t vocab = params.config().vocab_size;
  Tensor total;
  std::size_t count = 0;
  for (const auto& seq : batch) {
    if (seq.positions.empty()) continue;
    const Tensor hidden = model::encode(tape, params, seq.input, dropout);
    const Tensor probs = tape.row_softmax(model::mlm_logits(tape, params, hidden, seq.positions));
    std::vector<double> onehot(seq.positions.size() * vocab, 0.0);
    for (std::size_t i = 0; i < seq.targets.size(); ++i) {
      onehot[i * vocab + static_cast<std::size_t>(seq.targets[i])] = 1.0;
    }
    const Tensor picked = tape.sum(tape.mul(tape.log(tape.clamp_probs(probs)),
                                            Tensor::from_values(probs.shape(), std::move(onehot))));
    total = total.defined() ? tape.add(total, picked) : picked;
    count += seq.positions.size();
  }
  if (count == 0) throw UsageError("no masked positions in batch");
  return tape.scale(total, -1.0 / static_cast<double>(count));
}

}  // namespace

Tensor mlm_loss(Tape& tape, const model::EncoderParams& params,
                std::span<const MaskedSequence> batch, model::DropoutStream* dropout) {
  return masked_ce(tape, params, batch, dropout);
}

Tensor tlm_loss(Tape& tape, const model::EncoderParams& params,
                std::span<const MaskedSequence> batch, model::DropoutStream* dropout) {
  for (const auto& seq : batch) {
    const auto& ids = seq.input.segment_ids;
    const bool pair = !ids.empty() && ids.front() == 0 && ids.back() == 1;
    if (!pair || seq.input.attention_mode != model::AttentionMode::kFull) {
      throw UsageError("tlm_loss expects pair-layout inputs with Full attention");
    }
  }
  return masked_ce(tape, params, batch, dropout);
}

Tensor mean_pool(Tape& tape, const Tensor& hidden, std::size_t begin, std::size_t end) {
  if (begin >= end || end > hidden.rows()) throw UsageError("mean_pool: bad row range");
  std::vector<double> w(hidden.rows(), 0.0);
  for (std::size_t i = begin; i < end; ++i) w[i] = 1.0 / static_cast<double>(end - begin);
  return tape.matmul(Tensor::from_values({1, hidden.rows()}, std::move(w)), hidden);
}

Tensor xlco_loss(Tape& tape, const Tensor& src_embeddings, const Tensor& hyp_embeddings,
                 double temperature) {
  if (src_embeddings.shape() != hyp_embeddings.shape() || src_embeddings.shape().size() != 2) {
    throw DimensionError("xlco_loss: embedding batches differ in shape");
  }
  const std::size_t b = src_embeddings.rows();
  if (b < 2) throw UsageError("xlco_loss needs a batch of at least 2");
  if (!(temperature > 0.0)) throw UsageError("xlco temperature must be positive");
  const Tensor u = tape.l2_normalize_rows(src_embeddings);
  const Tensor v = tape.l2_normalize_rows(hyp_embeddings);
  const Tensor logits = tape.scale(tape.matmul(u, tape.transpose(v)), 1.0 / temperature);
  std::vector<double> eye(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) eye[i * b + i] = 1.0;
  const Tensor diag = Tensor::from_values({b, b}, std::move(eye));
  auto ce = [&](const Tensor& z) {
    return tape.sum(tape.mul(tape.log(tape.clamp_probs(tape.row_softmax(z))), diag));
  };
  const Tensor both = tape.add(ce(logits), ce(tape.transpose(logits)));
  return tape.scale(both, -0.5 / static_cast<double>(b));
}

}  // namespace fgted::losses
