#include "fgted/cli/trainer.hpp"

#include "fgted/model/encoder.hpp"
#include "fgted/numerics/errors.hpp"

namespace fgted::cli {

using model::AttentionMode;
using numerics::Tape;
using numerics::Tensor;

Baseline parse_baseline(std::string_view name) {
  if (name == "none") return Baseline::kNone;
  if (name == "grl") return Baseline::kGrl;
  if (name == "dfl") return Baseline::kDfl;
  if (name == "dfl-fixed") return Baseline::kDflFixed;
  throw UsageError("unknown baseline '" + std::string(name) + "'");
}

std::string_view baseline_name(Baseline b) {
  switch (b) {
    case Baseline::kNone:
      return "none";
    case Baseline::kGrl:
      return "grl";
    case Baseline::kDfl:
      return "dfl";
    case Baseline::kDflFixed:
      return "dfl-fixed";
  }
  return "none";
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (slr && baseline != Baseline::kNone) throw ConfigError("SLR cannot be combined with a baseline");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ConfigError("keep fraction must be in (0, 1]");
  }
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(dfl_gamma >= 0.0) || !(grl_lambda >= 0.0)) throw ConfigError("gamma and lambda must be >= 0");
}

std::vector<int> pair_labels(const synthgen::BilingualExample& ex) {
  std::vector<int> labels = ex.labels_hyp;
  labels.insert(labels.end(), ex.labels_src.begin(), ex.labels_src.end());
  return labels;
}

namespace {

struct ExampleLoss {
  Tensor loss;
  double ce = 0.0;
  double slr = 0.0;
};

ExampleLoss example_loss(Tape& tape, const model::EncoderParams& params,
                         const dataio::Vocabulary& vocab, const synthgen::BilingualExample& ex,
                         const TrainConfig& cfg, std::size_t step, std::size_t slot) {
  const double rate = params.config().dropout_rate;
  const auto labels = pair_labels(ex);
  const auto full = model::make_pair_input(vocab, ex.hyp, ex.src, AttentionMode::kFull);
  const auto& word_ids = full.word_ids;

  const std::uint64_t pair_seed = derive_seed(cfg.seed, {0x7b, step, slot, 0});
  const std::uint64_t mono_seed =
      cfg.share_dropout ? pair_seed : derive_seed(cfg.seed, {0x7b, step, slot, 1});
  Rng ce_rng = make_stream(cfg.seed, {0x7b, step, slot, 2});

  model::DropoutStream pair_drop(pair_seed, rate);
  const Tensor pair_logits = model::classify_tokens(
      tape, params, model::encode(tape, params, full, &pair_drop), &pair_drop);

  auto block = full;
  block.attention_mode = AttentionMode::kBlockCross;

  ExampleLoss out;
  if (cfg.slr) {
    model::DropoutStream mono_drop(mono_seed, rate);
    const Tensor mono_logits = model::classify_tokens(
        tape, params, model::encode(tape, params, block, &mono_drop), &mono_drop);
    auto bundle = losses::total_loss(tape, pair_logits, mono_logits, word_ids, labels, cfg.alpha,
                                     cfg.keep_fraction, ce_rng);
    out.loss = bundle.total;
    out.ce = bundle.ce_component;
    out.slr = bundle.slr_component;
    return out;
  }

  const Tensor probs = tape.row_softmax(pair_logits);
  switch (cfg.baseline) {
    case Baseline::kNone:
      out.loss = losses::ce_word_loss(tape, probs, word_ids, labels, cfg.keep_fraction, ce_rng);
      break;
    case Baseline::kGrl: {
      model::DropoutStream mono_drop(mono_seed, rate);
      const Tensor mono_hidden = model::encode(tape, params, block, &mono_drop);
      const Tensor ce = losses::ce_word_loss(tape, probs, word_ids, labels, cfg.keep_fraction, ce_rng);
      out.loss = tape.add(ce, losses::grl_aux_loss(tape, params, mono_hidden, word_ids, labels,
                                                   cfg.grl_lambda));
      out.ce = ce.item();
      return out;
    }
    case Baseline::kDfl:
    case Baseline::kDflFixed: {
      // The biased model is the same network restricted to monolingual
      // evidence, read without dropout and held constant.
      auto itape = Tape::inference();
      const Tensor biased = itape.row_softmax(model::classify_tokens(
          itape, params, model::encode(itape, params, block)));
      out.loss = losses::dfl_loss(tape, probs, biased, word_ids, labels, cfg.dfl_gamma,
                                  cfg.baseline == Baseline::kDflFixed);
      break;
    }
  }
  out.ce = out.loss.item();
  return out;
}

}  // namespace

model::EncoderParams train(model::EncoderParams params, const dataio::Vocabulary& vocab,
                           std::span<const synthgen::BilingualExample> data,
                           const TrainConfig& config, std::vector<StepLog>* log) {
  config.validate();
  if (data.empty()) throw DataError("training data is empty");
  if (params.config().vocab_size != vocab.size()) {
    throw ConfigError("model vocabulary size does not match the vocabulary");
  }
  Adam adam(params, config.adam);
  params.zero_grad();
  const double inv_batch = 1.0 / static_cast<double>(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng pick = make_stream(config.seed, {0x7b, step});
    StepLog entry;
    for (std::size_t slot = 0; slot < config.batch; ++slot) {
      const auto& ex = data[uniform_index(pick, data.size())];
      Tape tape;
      const ExampleLoss el = example_loss(tape, params, vocab, ex, config, step, slot);
      entry.loss += el.loss.item() * inv_batch;
      entry.ce += el.ce * inv_batch;
      entry.slr += el.slr * inv_batch;
      // Nothing to learn when every term was detached.
      if (el.loss.tracked()) tape.backward(tape.scale(el.loss, inv_batch));
    }
    if (log) log->push_back(entry);
    adam.step(params);
  }
  return params;
}

}  // namespace fgted::cli
