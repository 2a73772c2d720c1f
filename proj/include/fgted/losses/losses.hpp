#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fgted/model/config.hpp"
#include "fgted/numerics/rng.hpp"
#include "fgted/numerics/tape.hpp"

namespace fgted::losses {

using numerics::Tape;
using numerics::Tensor;

inline constexpr double kDefaultKeepFraction = 0.1;
inline constexpr double kDefaultDflGamma = 2.0;
inline constexpr double kDefaultGrlLambda = 0.1;

// Token rows that carry a word (word_ids[r] >= 0), checked against the label
// count: labels must cover word ids 0..n-1 exactly. Throws DataError.
std::vector<std::size_t> word_rows(std::span<const int> word_ids, std::size_t label_count);

// Summed cross-entropy over word tokens; every subword carries its word's
// label. Error words always contribute live terms. Each correct word is kept
// live with probability keep_fraction (one draw per word, none when
// keep_fraction == 1); the rest still contribute their value through a
// detached copy but no gradient.
Tensor ce_word_loss(Tape& tape, const Tensor& probs, std::span<const int> word_ids,
                    std::span<const int> labels, double keep_fraction, Rng& rng);

// Unbalanced summed cross-entropy (all terms live).
Tensor ce_loss(Tape& tape, const Tensor& probs, std::span<const int> word_ids,
               std::span<const int> labels);

// -sum_i detach(Q)[i, error] * KL(Q_i || detach(P)_i) over row-aligned word
// rows. Only Q receives gradient.
Tensor slr_loss(Tape& tape, const Tensor& q, const Tensor& p);

struct LossBundle {
  Tensor total;
  double ce_component = 0.0;
  double slr_component = 0.0;
  double alpha = 0.0;
  // Detached word-row probabilities for logging.
  std::optional<Tensor> p;
  std::optional<Tensor> q;
};

// pair_logits come from the Full-attention pair forward, single_logits from
// the single-sentence forwards laid out in the same rows (equivalently one
// BlockCross pair forward). With alpha == 0 the SLR term is evaluated on
// detached values only, so the gradient is exactly the CE gradient.
LossBundle total_loss(Tape& tape, const Tensor& pair_logits, const Tensor& single_logits,
                      std::span<const int> word_ids, std::span<const int> labels, double alpha,
                      double keep_fraction, Rng& rng);

// CE of classifier predictions on monolingual hidden states, with the
// gradient entering the encoder reversed and scaled by lambda. The classifier
// itself receives the ordinary gradient.
Tensor grl_aux_loss(Tape& tape, const model::EncoderParams& params, const Tensor& mono_hidden,
                    std::span<const int> word_ids, std::span<const int> labels, double lambda);

// Focal-style debiasing: per word-token weight (1 - B_gold)^gamma on -ln P_gold,
// B treated as constant. With fixed = true the weight applies only to error
// tokens and correct tokens use plain CE.
Tensor dfl_loss(Tape& tape, const Tensor& probs, const Tensor& biased_probs,
                std::span<const int> word_ids, std::span<const int> labels, double gamma,
                bool fixed);

}  // namespace fgted::losses
