#include "fgted/cli/pretrain.hpp"

#include "fgted/cli/optimizer.hpp"
#include "fgted/losses/pretrain_losses.hpp"
#include "fgted/model/encoder.hpp"
#include "fgted/numerics/errors.hpp"

namespace fgted::cli {

using dataio::Side;
using model::AttentionMode;
using numerics::Tape;
using numerics::Tensor;

Objectives parse_objectives(std::string_view spec) {
  if (spec == "mlm") return {true, false, false};
  if (spec == "tlm") return {false, true, false};
  if (spec == "mlm+tlm") return {true, true, false};
  if (spec == "mlm+tlm+xlco") return {true, true, true};
  throw UsageError("unknown pretraining objective '" + std::string(spec) +
                   "' (expected mlm, tlm, mlm+tlm or mlm+tlm+xlco)");
}

std::string objectives_name(const Objectives& o) {
  std::string s;
  for (auto [on, name] : {std::pair{o.mlm, "mlm"}, {o.tlm, "tlm"}, {o.xlco, "xlco"}}) {
    if (!on) continue;
    if (!s.empty()) s += "+";
    s += name;
  }
  return s;
}

void PretrainConfig::validate() const {
  if (!objectives.mlm && !objectives.tlm && !objectives.xlco) {
    throw ConfigError("no pretraining objective enabled");
  }
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (objectives.xlco && batch < 2) throw ConfigError("xlco needs batch >= 2");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

dataio::Vocabulary corpus_vocabulary(std::span<const synthgen::ParallelPair> corpus) {
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(2 * corpus.size());
  for (const auto& p : corpus) {
    sentences.push_back(p.src);
    sentences.push_back(p.tgt);
  }
  return dataio::Vocabulary::from_words(sentences);
}

namespace {

std::pair<std::size_t, std::size_t> word_span(const model::SegmentedInput& in) {
  std::size_t a = in.length(), b = 0;
  for (std::size_t i = 0; i < in.length(); ++i) {
    if (in.word_ids[i] >= 0) {
      a = std::min(a, i);
      b = i + 1;
    }
  }
  return {a, b};
}

}  // namespace

model::EncoderParams pretrain(model::EncoderParams params, const dataio::Vocabulary& vocab,
                              std::span<const synthgen::ParallelPair> corpus,
                              const PretrainConfig& config, std::vector<double>* loss_log) {
  config.validate();
  if (corpus.empty()) throw DataError("pretraining corpus is empty");
  if (params.config().vocab_size != vocab.size()) {
    throw ConfigError("model vocabulary size does not match the corpus vocabulary");
  }
  AdamConfig ac;
  ac.encoder_lr = config.lr;
  ac.classifier_lr = config.lr;
  Adam adam(params, ac);
  const std::size_t vsize = vocab.size();
  const double rate = params.config().dropout_rate;

  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = make_stream(config.seed, {0x9e, step});
    model::DropoutStream drop(derive_seed(config.seed, {0x9e, step, 1}), rate);
    std::vector<std::size_t> idx(config.batch);
    for (auto& i : idx) i = uniform_index(rng, corpus.size());

    Tape tape;
    std::vector<Tensor> terms;
    if (config.objectives.mlm) {
      std::vector<losses::MaskedSequence> batch;
      for (std::size_t i : idx) {
        batch.push_back(losses::mask_tokens(
            model::make_single_input(vocab, corpus[i].tgt, Side::kHyp), vsize, rng));
        batch.push_back(losses::mask_tokens(
            model::make_single_input(vocab, corpus[i].src, Side::kSrc), vsize, rng));
      }
      terms.push_back(losses::mlm_loss(tape, params, batch, &drop));
    }
    if (config.objectives.tlm) {
      std::vector<losses::MaskedSequence> batch;
      for (std::size_t i : idx) {
        batch.push_back(losses::mask_tokens(
            model::make_pair_input(vocab, corpus[i].tgt, corpus[i].src, AttentionMode::kFull),
            vsize, rng));
      }
      terms.push_back(losses::tlm_loss(tape, params, batch, &drop));
    }
    if (config.objectives.xlco) {
      std::vector<Tensor> src_rows, hyp_rows;
      for (std::size_t i : idx) {
        const auto s = model::make_single_input(vocab, corpus[i].src, Side::kSrc);
        const auto h = model::make_single_input(vocab, corpus[i].tgt, Side::kHyp);
        const auto [sa, sb] = word_span(s);
        const auto [ha, hb] = word_span(h);
        src_rows.push_back(losses::mean_pool(tape, model::encode(tape, params, s, &drop), sa, sb));
        hyp_rows.push_back(losses::mean_pool(tape, model::encode(tape, params, h, &drop), ha, hb));
      }
      terms.push_back(losses::xlco_loss(tape, tape.concat_rows(src_rows),
                                        tape.concat_rows(hyp_rows), config.temperature));
    }
    Tensor loss = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) loss = tape.add(loss, terms[k]);
    if (loss_log) loss_log->push_back(loss.item());
    tape.backward(loss);
    adam.step(params);
  }
  return params;
}

}  // namespace fgted::cli
