#include "fgted/losses/losses.hpp"

#include <cmath>

#include "fgted/model/encoder.hpp"
#include "fgted/numerics/errors.hpp"

namespace fgted::losses {

namespace {

void require_token_probs(const Tensor& probs, std::span<const int> word_ids, const char* what) {
  if (probs.shape().size() != 2 || probs.cols() != 2) {
    throw DimensionError(std::string(what) + ": expected T x 2 probabilities, got " +
                         numerics::shape_to_string(probs.shape()));
  }
  if (probs.rows() != word_ids.size()) {
    throw DataError(std::string(what) + ": " + std::to_string(probs.rows()) + " rows but " +
                    std::to_string(word_ids.size()) + " word ids");
  }
}

// One-hot rows (or weighted one-hot rows) selecting the gold class.
Tensor gold_mask(std::span<const std::size_t> rows, std::span<const int> word_ids,
                 std::span<const int> labels, std::span<const double> weight = {}) {
  std::vector<double> m(rows.size() * 2, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int label = labels[static_cast<std::size_t>(word_ids[rows[i]])];
    m[2 * i + static_cast<std::size_t>(label)] = weight.empty() ? 1.0 : weight[i];
  }
  return Tensor::from_values({rows.size(), 2}, std::move(m));
}

Tensor picked_sum(Tape& tape, const Tensor& log_probs, std::span<const std::size_t> rows,
                  std::span<const int> word_ids, std::span<const int> labels) {
  return tape.sum(tape.mul(tape.gather_rows(log_probs, rows), gold_mask(rows, word_ids, labels)));
}

}  // namespace

std::vector<std::size_t> word_rows(std::span<const int> word_ids, std::size_t label_count) {
  std::vector<std::size_t> rows;
  std::vector<bool> seen(label_count, false);
  for (std::size_t r = 0; r < word_ids.size(); ++r) {
    const int w = word_ids[r];
    if (w < 0) continue;
    if (static_cast<std::size_t>(w) >= label_count) {
      throw DataError("word id " + std::to_string(w) + " has no label (" +
                      std::to_string(label_count) + " labels)");
    }
    seen[static_cast<std::size_t>(w)] = true;
    rows.push_back(r);
  }
  for (std::size_t w = 0; w < label_count; ++w) {
    if (!seen[w]) throw DataError("label " + std::to_string(w) + " has no token");
  }
  if (rows.empty()) throw DataError("no word tokens to score");
  return rows;
}

Tensor ce_word_loss(Tape& tape, const Tensor& probs, std::span<const int> word_ids,
                    std::span<const int> labels, double keep_fraction, Rng& rng) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw UsageError("keep_fraction must be in (0, 1]");
  }
  require_token_probs(probs, word_ids, "ce_word_loss");
  const auto rows = word_rows(word_ids, labels.size());
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
  }

  std::vector<bool> live(labels.size(), true);
  if (keep_fraction < 1.0) {
    for (std::size_t w = 0; w < labels.size(); ++w) {
      if (labels[w] == 0) live[w] = uniform_unit(rng) < keep_fraction;
    }
  }
  std::vector<std::size_t> live_rows, dead_rows;
  for (std::size_t r : rows) {
    (live[static_cast<std::size_t>(word_ids[r])] ? live_rows : dead_rows).push_back(r);
  }

  const Tensor log_probs = tape.log(tape.clamp_probs(probs));
  Tensor total;
  if (!live_rows.empty()) total = picked_sum(tape, log_probs, live_rows, word_ids, labels);
  if (!dead_rows.empty()) {
    Tensor dead = picked_sum(tape, numerics::detach(log_probs), dead_rows, word_ids, labels);
    total = total.defined() ? tape.add(total, dead) : dead;
  }
  return tape.scale(total, -1.0);
}

Tensor ce_loss(Tape& tape, const Tensor& probs, std::span<const int> word_ids,
               std::span<const int> labels) {
  Rng unused(0);
  return ce_word_loss(tape, probs, word_ids, labels, 1.0, unused);
}

Tensor slr_loss(Tape& tape, const Tensor& q, const Tensor& p) {
  if (q.shape() != p.shape() || q.shape().size() != 2 || q.cols() != 2) {
    throw UsageError("slr_loss: Q " + numerics::shape_to_string(q.shape()) + " and P " +
                     numerics::shape_to_string(p.shape()) + " are not row-aligned T x 2");
  }
  std::vector<double> w(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) w[i] = q.at(i, 1);
  const Tensor weight = Tensor::from_values({q.rows(), 1}, std::move(w));
  const Tensor kl = tape.kl_div_rows(tape.clamp_probs(q), tape.clamp_probs(numerics::detach(p)));
  return tape.scale(tape.sum(tape.mul(kl, weight)), -1.0);
}

LossBundle total_loss(Tape& tape, const Tensor& pair_logits, const Tensor& single_logits,
                      std::span<const int> word_ids, std::span<const int> labels, double alpha,
                      double keep_fraction, Rng& rng) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw UsageError("alpha must be >= 0");
  if (pair_logits.shape() != single_logits.shape()) {
    throw UsageError("pair and single-sentence logits are not row-aligned");
  }
  LossBundle out;
  out.alpha = alpha;
  const Tensor p = tape.row_softmax(pair_logits);
  const Tensor ce = ce_word_loss(tape, p, word_ids, labels, keep_fraction, rng);
  out.ce_component = ce.item();

  const auto rows = word_rows(word_ids, labels.size());
  Tensor slr;
  Tensor q_rows;
  if (alpha > 0.0) {
    q_rows = tape.gather_rows(tape.row_softmax(single_logits), rows);
    slr = slr_loss(tape, q_rows, tape.gather_rows(p, rows));
    out.total = tape.add(ce, tape.scale(slr, alpha));
  } else {
    Tape side = Tape::inference();
    q_rows = side.gather_rows(side.row_softmax(numerics::detach(single_logits)), rows);
    slr = slr_loss(side, q_rows, side.gather_rows(numerics::detach(p), rows));
    out.total = ce;
  }
  out.slr_component = slr.item();
  Tape view = Tape::inference();
  out.p = view.gather_rows(numerics::detach(p), rows);
  out.q = numerics::detach(q_rows);
  return out;
}

Tensor grl_aux_loss(Tape& tape, const model::EncoderParams& params, const Tensor& mono_hidden,
                    std::span<const int> word_ids, std::span<const int> labels, double lambda) {
  if (!(lambda >= 0.0)) throw UsageError("GRL lambda must be >= 0");
  const Tensor reversed = tape.grad_reverse(mono_hidden, lambda);
  const Tensor probs = tape.row_softmax(model::classify_tokens(tape, params, reversed));
  return ce_loss(tape, probs, word_ids, labels);
}

Tensor dfl_loss(Tape& tape, const Tensor& probs, const Tensor& biased_probs,
                std::span<const int> word_ids, std::span<const int> labels, double gamma,
                bool fixed) {
  if (!(gamma >= 0.0)) throw UsageError("DFL gamma must be >= 0");
  require_token_probs(probs, word_ids, "dfl_loss");
  if (biased_probs.shape() != probs.shape()) {
    throw DataError("dfl_loss: biased-model probabilities are not row-aligned");
  }
  const auto rows = word_rows(word_ids, labels.size());
  std::vector<double> weight(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int label = labels[static_cast<std::size_t>(word_ids[rows[i]])];
    const double b_gold = biased_probs.at(rows[i], static_cast<std::size_t>(label));
    weight[i] = (fixed && label == 0) ? 1.0 : std::pow(1.0 - b_gold, gamma);
  }
  const Tensor log_probs = tape.log(tape.clamp_probs(probs));
  const Tensor picked = tape.sum(tape.mul(tape.gather_rows(log_probs, rows),
                                          gold_mask(rows, word_ids, labels, weight)));
  return tape.scale(picked, -1.0);
}

}  // namespace fgted::losses
