#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "acceptance/criteria.hpp"
#include "fgted/cli/trainer.hpp"
#include "fgted/dataio/annotation.hpp"
#include "fgted/dataio/split.hpp"
#include "fgted/eval/metrics.hpp"
#include "fgted/losses/losses.hpp"
#include "fgted/losses/pretrain_losses.hpp"
#include "fgted/model/encoder.hpp"
#include "fgted/synthgen/pipeline.hpp"
#include "support/gradcheck.hpp"
#include "support/metric_oracles.hpp"
#include "support/synth_oracles.hpp"
#include "support/tempdir.hpp"

namespace fgted::acceptance {

namespace {

using dataio::AnnotatedExample;
using dataio::ErrorType;
using dataio::ExamplePredictions;
using dataio::Side;
using numerics::Shape;
using numerics::Tape;
using numerics::Tensor;
using testing::LeafSpec;
using testing::LossFn;

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << x;
  return s.str();
}

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.5, double hi = 1.5) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * uniform_unit(rng);
  return v;
}

Tensor weighted_sum(Tape& tape, const Tensor& x, std::uint64_t salt) {
  Rng rng = make_stream(99, {salt});
  return tape.sum(tape.mul(x, Tensor::from_values(x.shape(), random_values(rng, x.size()))));
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
}

// Worst relative error between the reverse-mode gradient of `analytic` and
// central differences of `reference`, with leaf k's numeric gradient scaled
// by scales[k] (empty: all 1).
double gradient_gap(const LossFn& analytic, const LossFn& reference,
                    const std::vector<LeafSpec>& leaves, std::vector<double> scales = {}) {
  if (scales.empty()) scales.assign(leaves.size(), 1.0);
  std::vector<Tensor> params;
  for (const auto& l : leaves) params.push_back(Tensor::parameter(l.shape, l.values));
  Tape tape;
  tape.backward(analytic(tape, params));
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = 0; j < leaves[i].values.size(); ++j) {
      auto eval = [&](double delta) {
        std::vector<Tensor> in;
        for (std::size_t k = 0; k < leaves.size(); ++k) {
          auto v = leaves[k].values;
          if (k == i) v[j] += delta;
          in.push_back(Tensor::from_values(leaves[k].shape, std::move(v)));
        }
        Tape t = Tape::inference();
        return reference(t, in).item();
      };
      const double numeric = scales[i] * (eval(h) - eval(-h)) / (2.0 * h);
      const double a = params[i].has_grad() ? params[i].grad()[j] : 0.0;
      worst = std::max(worst, testing::relative_error(a, numeric));
    }
  }
  return worst;
}

double gradient_gap(const LossFn& f, const std::vector<LeafSpec>& leaves) {
  return gradient_gap(f, f, leaves);
}

// Word ids for a pair-like token sequence: specials at both ends and one
// separator, each word spanning one or two tokens.
std::vector<int> random_word_ids(Rng& rng, std::size_t words) {
  std::vector<int> ids{-1};
  const std::size_t split = uniform_index(rng, words + 1);
  for (std::size_t w = 0; w < words; ++w) {
    if (w == split) ids.push_back(-1);
    for (std::size_t k = 0, n = 1 + uniform_index(rng, 2); k < n; ++k) ids.push_back(static_cast<int>(w));
  }
  ids.push_back(-1);
  return ids;
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  std::vector<int> l(n);
  for (int& x : l) x = static_cast<int>(uniform_index(rng, 2));
  return l;
}

model::EncoderConfig tiny_config(std::size_t vocab, std::uint64_t seed) {
  model::EncoderConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 8;
  c.vocab_size = vocab;
  c.max_positions = 8;
  c.classifier_hidden = {6, 2};
  c.dropout_rate = 0.0;
  c.seed = seed;
  return c;
}

// Leaves for every parameter of a model plus a rebuild function.
struct ParamLeaves {
  std::vector<LeafSpec> leaves;
  std::vector<std::string> names;
  model::EncoderConfig config;

  explicit ParamLeaves(const model::EncoderParams& p) : config(p.config()) {
    for (const auto& nt : p.tensors()) {
      names.push_back(nt.name);
      leaves.push_back({nt.tensor.shape(), {nt.tensor.values().begin(), nt.tensor.values().end()}});
    }
  }
  model::EncoderParams rebuild(std::span<const Tensor> in) const {
    std::vector<model::NamedTensor> all;
    for (std::size_t i = 0; i < names.size(); ++i) all.push_back({names[i], in[i]});
    return model::EncoderParams(config, std::move(all));
  }
};

// ---- 1 ------------------------------------------------------------------

Outcome gradient_correctness() {
  Rng rng = make_stream(101, {});
  double worst = 0.0;
  std::size_t checks = 0;
  auto note = [&](double gap) {
    worst = std::max(worst, gap);
    ++checks;
  };

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t r = 1 + uniform_index(rng, 8);
    const std::size_t c = 2 + uniform_index(rng, 7);
    const std::size_t inner = 1 + uniform_index(rng, 8);
    const auto salt = static_cast<std::uint64_t>(trial);
    auto leaf = [&](Shape s, double lo = -1.5, double hi = 1.5) {
      return LeafSpec{s, random_values(rng, numerics::shape_size(s), lo, hi)};
    };
    auto unary = [&](auto op, LeafSpec x) {
      note(gradient_gap([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, op(t, in[0]), salt); },
                        {std::move(x)}));
    };
    auto binary = [&](auto op, LeafSpec a, LeafSpec b) {
      note(gradient_gap(
          [&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, op(t, in[0], in[1]), salt); },
          {std::move(a), std::move(b)}));
    };

    binary([](Tape& t, auto& a, auto& b) { return t.add(a, b); }, leaf({r, c}), leaf({c}));
    binary([](Tape& t, auto& a, auto& b) { return t.add(a, b); }, leaf({r, c}), leaf({r, c}));
    binary([](Tape& t, auto& a, auto& b) { return t.sub(a, b); }, leaf({r, c}), leaf({r, c}));
    binary([](Tape& t, auto& a, auto& b) { return t.mul(a, b); }, leaf({r, c}), leaf({r, c}));
    binary([](Tape& t, auto& a, auto& b) { return t.matmul(a, b); }, leaf({r, inner}), leaf({inner, c}));
    binary([](Tape& t, auto& a, auto& b) { return t.concat_rows(std::vector<Tensor>{a, b}); },
           leaf({r, c}), leaf({inner, c}));
    unary([](Tape& t, auto& a) { return t.scale(a, -0.7); }, leaf({r, c}));
    unary([](Tape& t, auto& a) { return t.transpose(a); }, leaf({r, c}));
    unary([&](Tape& t, auto& a) { return t.slice_rows(a, r / 2, r); }, leaf({r, c}));
    {
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < r + 2; ++i) ids.push_back(uniform_index(rng, inner));
      unary([ids](Tape& t, auto& a) { return t.gather_rows(a, ids); }, leaf({inner, c}));
    }
    note(gradient_gap(
        [&](Tape& t, std::span<const Tensor> in) {
          return weighted_sum(t, t.layer_norm(in[0], in[1], in[2]), salt);
        },
        {leaf({r, c}), leaf({c}), leaf({c})}));
    unary([](Tape& t, auto& a) { return t.gelu(a); }, leaf({r, c}));
    unary([](Tape& t, auto& a) { return t.tanh(a); }, leaf({r, c}));
    {
      std::vector<double> mask(r * c);
      for (double& m : mask) m = uniform_unit(rng) < 0.3 ? 0.0 : 1.0;
      unary([&, mask](Tape& t, auto& a) { return t.dropout(a, Tensor::from_values({r, c}, mask), 0.3); },
            leaf({r, c}));
    }
    note(gradient_gap([](Tape& t, std::span<const Tensor> in) { return t.sum(t.mul(in[0], in[0])); },
                      {leaf({r, c})}));
    note(gradient_gap([](Tape& t, std::span<const Tensor> in) { return t.mean(t.mul(in[0], in[0])); },
                      {leaf({r, c})}));
    unary([](Tape& t, auto& a) { return t.log(a); }, leaf({r, c}, 0.2, 3.0));
    unary([](Tape& t, auto& a) { return t.exp(a); }, leaf({r, c}));
    unary([](Tape& t, auto& a) { return t.row_softmax(a); }, leaf({r, c}));
    binary([](Tape& t, auto& a, auto& b) { return t.kl_div_rows(t.row_softmax(a), t.row_softmax(b)); },
           leaf({r, c}), leaf({r, c}));
    unary([](Tape& t, auto& a) { return t.clamp_probs(t.row_softmax(a)); }, leaf({r, c}));
    unary([](Tape& t, auto& a) { return t.l2_normalize_rows(a); }, leaf({r, c}));
    {
      // Reversal: the gradient is -strength times the identity's.
      const double s = 0.1 + uniform_unit(rng);
      note(gradient_gap([&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, t.grad_reverse(in[0], s), salt); },
                        [&](Tape& t, std::span<const Tensor> in) { return weighted_sum(t, in[0], salt); },
                        {leaf({r, c})}, {-s}));
    }
    {
      const std::size_t heads = 1 + uniform_index(rng, 2);
      const std::size_t d = 2 * heads;
      std::vector<numerics::KeyRange> ranges(r);
      for (auto& kr : ranges) {
        kr.begin = uniform_index(rng, r);
        kr.end = kr.begin + 1 + uniform_index(rng, r - kr.begin);
      }
      note(gradient_gap(
          [&](Tape& t, std::span<const Tensor> in) {
            return weighted_sum(t, t.attention(in[0], in[1], in[2], heads, ranges), salt);
          },
          {leaf({r, d}), leaf({r, d}), leaf({r, d})}));
    }

    // Word-level losses over a random token/word layout.
    const std::size_t words = 1 + uniform_index(rng, 5);
    const auto ids = random_word_ids(rng, words);
    const auto labels = random_labels(rng, words);
    const std::size_t rows = ids.size();
    auto normal_leaf = [&](std::size_t rr, std::size_t cc) {
      std::vector<double> v(rr * cc);
      for (double& x : v) x = standard_normal(rng);
      return LeafSpec{{rr, cc}, v};
    };
    note(gradient_gap(
        [&](Tape& t, std::span<const Tensor> in) {
          Rng unused(0);
          return losses::ce_word_loss(t, t.row_softmax(in[0]), ids, labels, 1.0, unused);
        },
        {normal_leaf(rows, 2)}));

    // SLR: the error-probability weight is a constant, so the reference
    // holds it at the base point.
    {
      const auto z = normal_leaf(words, 2);
      const auto pl = normal_leaf(words, 2);
      Tape base = Tape::inference();
      const Tensor p = base.row_softmax(Tensor::from_values(pl.shape, pl.values));
      const Tensor q0 = base.row_softmax(Tensor::from_values(z.shape, z.values));
      std::vector<double> w(words);
      for (std::size_t i = 0; i < words; ++i) w[i] = q0.at(i, 1);
      const Tensor weight = Tensor::from_values({words, 1}, w);
      auto fixed_weight_slr = [&](Tape& t, const Tensor& q) {
        return t.scale(t.sum(t.mul(t.kl_div_rows(t.clamp_probs(q), t.clamp_probs(p)), weight)), -1.0);
      };
      note(gradient_gap([&](Tape& t, std::span<const Tensor> in) { return losses::slr_loss(t, t.row_softmax(in[0]), p); },
                        [&](Tape& t, std::span<const Tensor> in) { return fixed_weight_slr(t, t.row_softmax(in[0])); },
                        {z}));

      // Total loss with keep fraction 1: CE on the pair rows plus alpha
      // times the SLR term on the single-sentence rows, P held constant.
      const auto pair = normal_leaf(rows, 2);
      const auto single = normal_leaf(rows, 2);
      const double alpha = 0.05 + uniform_unit(rng);
      const auto wr = losses::word_rows(ids, labels.size());
      Tape b2 = Tape::inference();
      const Tensor p_rows = b2.gather_rows(b2.row_softmax(Tensor::from_values(pair.shape, pair.values)), wr);
      const Tensor q_rows = b2.gather_rows(b2.row_softmax(Tensor::from_values(single.shape, single.values)), wr);
      std::vector<double> wt(wr.size());
      for (std::size_t i = 0; i < wr.size(); ++i) wt[i] = q_rows.at(i, 1);
      const Tensor w_rows = Tensor::from_values({wr.size(), 1}, wt);
      note(gradient_gap(
          [&](Tape& t, std::span<const Tensor> in) {
            Rng unused(0);
            return losses::total_loss(t, in[0], in[1], ids, labels, alpha, 1.0, unused).total;
          },
          [&](Tape& t, std::span<const Tensor> in) {
            Rng unused(0);
            const Tensor ce = losses::ce_word_loss(t, t.row_softmax(in[0]), ids, labels, 1.0, unused);
            const Tensor q = t.gather_rows(t.row_softmax(in[1]), wr);
            const Tensor kl = t.kl_div_rows(t.clamp_probs(q), t.clamp_probs(p_rows));
            return t.add(ce, t.scale(t.sum(t.mul(kl, w_rows)), -alpha));
          },
          {pair, single}));
    }

    for (bool fixed : {false, true}) {
      const auto b = normal_leaf(rows, 2);
      Tape side = Tape::inference();
      const Tensor bias = side.row_softmax(Tensor::from_values(b.shape, b.values));
      const double gamma = 0.5 + 2.0 * uniform_unit(rng);
      note(gradient_gap(
          [&](Tape& t, std::span<const Tensor> in) {
            return losses::dfl_loss(t, t.row_softmax(in[0]), bias, ids, labels, gamma, fixed);
          },
          {normal_leaf(rows, 2)}));
    }

    {
      const std::size_t n = 2 + uniform_index(rng, 4);
      const std::size_t d = 2 + uniform_index(rng, 5);
      const double temp = 0.1 + uniform_unit(rng);
      note(gradient_gap(
          [&](Tape& t, std::span<const Tensor> in) { return losses::xlco_loss(t, in[0], in[1], temp); },
          {normal_leaf(n, d), normal_leaf(n, d)}));
    }

    // GRL: the classifier sees the plain CE gradient, the hidden states its
    // reversal scaled by lambda.
    {
      const auto params = model::init_params(tiny_config(12, salt));
      const ParamLeaves pl(params);
      std::vector<LeafSpec> leaves{normal_leaf(rows, params.config().d_model)};
      std::vector<double> scales;
      const double lambda = 0.1 + uniform_unit(rng);
      scales.push_back(-lambda);
      std::vector<std::size_t> head;
      for (std::size_t k = 0; k < pl.names.size(); ++k) {
        if (model::is_classifier_parameter(pl.names[k])) {
          head.push_back(k);
          leaves.push_back(pl.leaves[k]);
          scales.push_back(1.0);
        }
      }
      auto with_head = [&](std::span<const Tensor> in) {
        std::vector<Tensor> all;
        for (const auto& nt : params.tensors()) all.push_back(nt.tensor);
        for (std::size_t h = 0; h < head.size(); ++h) all[head[h]] = in[1 + h];
        return pl.rebuild(all);
      };
      note(gradient_gap(
          [&](Tape& t, std::span<const Tensor> in) {
            return losses::grl_aux_loss(t, with_head(in), in[0], ids, labels, lambda);
          },
          [&](Tape& t, std::span<const Tensor> in) {
            const auto q = with_head(in);
            return losses::ce_loss(t, t.row_softmax(model::classify_tokens(t, q, in[0])), ids, labels);
          },
          leaves, scales));
    }
  }

  // Pretraining objectives through a whole (tiny) encoder.
  for (int trial = 0; trial < 6; ++trial) {
    const auto params = model::init_params(tiny_config(12, 200 + trial));
    const ParamLeaves pl(params);
    Rng r = make_stream(102, {static_cast<std::uint64_t>(trial)});
    std::vector<int> a, b;
    for (std::size_t i = 0, n = 2 + uniform_index(r, 4); i < n; ++i) a.push_back(dataio::kNumSpecials + static_cast<int>(uniform_index(r, 7)));
    for (std::size_t i = 0, n = 2 + uniform_index(r, 4); i < n; ++i) b.push_back(dataio::kNumSpecials + static_cast<int>(uniform_index(r, 7)));
    const bool tlm = trial % 2 == 1;
    const auto layout = tlm ? model::pair_layout(a, b, model::AttentionMode::kFull)
                            : model::single_layout(a, Side::kSrc);
    const std::vector<losses::MaskedSequence> batch{losses::mask_tokens(layout, 12, r, 0.4)};
    note(gradient_gap(
        [&](Tape& t, std::span<const Tensor> in) {
          const auto q = pl.rebuild(in);
          return tlm ? losses::tlm_loss(t, q, batch) : losses::mlm_loss(t, q, batch);
        },
        pl.leaves));
  }

  return {worst <= 1e-4, std::to_string(checks) + " checks, worst relative error " + fmt(worst)};
}

// ---- 2 ------------------------------------------------------------------

std::vector<synthgen::BilingualExample> toy_training_set(std::size_t n, std::uint64_t seed) {
  const auto corpus = synthgen::cipher_corpus(n, 30, seed);
  class Uniform : public synthgen::Filler {
   public:
    explicit Uniform(std::vector<std::string> w) : w_(std::move(w)) {}
    const std::vector<std::string>& candidates() const override { return w_; }
    std::vector<std::vector<double>> distributions(std::span<const std::string>,
                                                   std::span<const std::size_t> pos) const override {
      return std::vector<std::vector<double>>(pos.size(), std::vector<double>(w_.size(), 1.0 / double(w_.size())));
    }

   private:
    std::vector<std::string> w_;
  };
  const Uniform hf(synthgen::single_token_words(corpus.alignment, true));
  const Uniform sf(synthgen::single_token_words(corpus.alignment, false));
  auto ppl = [](std::span<const std::string> w) { return 1.0 + static_cast<double>(w.size()); };
  const synthgen::SynthModels models{&hf, &sf, ppl, ppl};
  synthgen::SynthConfig cfg;
  cfg.seed = seed;
  return synthgen::generate_dataset(corpus.pairs, synthgen::alignment_scorer(corpus.alignment), models, cfg, n).examples;
}

Outcome detachment() {
  Rng rng = make_stream(201, {});
  bool pair_zero = true, dead_zero = true, live_nonzero = true, total_matches_ce = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t words = 2 + uniform_index(rng, 8);
    const auto ids = random_word_ids(rng, words);
    const auto labels = random_labels(rng, words);
    const std::size_t rows = ids.size();
    const auto wr = losses::word_rows(ids, labels.size());

    // SLR alone: nothing reaches the pair logits.
    {
      Tensor pair = Tensor::parameter({wr.size(), 2}, random_values(rng, wr.size() * 2));
      Tensor single = Tensor::parameter({wr.size(), 2}, random_values(rng, wr.size() * 2));
      Tape t;
      t.backward(losses::slr_loss(t, t.row_softmax(single), t.row_softmax(pair)));
      if (pair.has_grad()) {
        for (double g : pair.grad()) pair_zero = pair_zero && g == 0.0;
      }
    }
    // Inside the total loss the pair logits get exactly the CE gradient.
    {
      const auto pv = random_values(rng, rows * 2), sv = random_values(rng, rows * 2);
      Tensor p1 = Tensor::parameter({rows, 2}, pv), s1 = Tensor::parameter({rows, 2}, sv);
      Tensor p2 = Tensor::parameter({rows, 2}, pv);
      Rng a = make_stream(7, {static_cast<std::uint64_t>(trial)}), b = a;
      Tape t1, t2;
      t1.backward(losses::total_loss(t1, p1, s1, ids, labels, 0.7, 0.5, a).total);
      const Tensor ce = losses::ce_word_loss(t2, t2.row_softmax(p2), ids, labels, 0.5, b);
      if (ce.tracked()) t2.backward(ce);
      const std::vector<double> zeros(rows * 2, 0.0);
      const auto g1 = p1.has_grad() ? p1.grad() : std::span<const double>(zeros);
      const auto g2 = p2.has_grad() ? p2.grad() : std::span<const double>(zeros);
      total_matches_ce = total_matches_ce && same_bits(g1, g2);
    }
    // Dead correct words: value kept, gradient exactly zero.
    {
      Tensor logits = Tensor::parameter({rows, 2}, random_values(rng, rows * 2));
      Rng keep = make_stream(8, {static_cast<std::uint64_t>(trial)});
      Rng replay = keep;
      Tape t;
      const Tensor ce = losses::ce_word_loss(t, t.row_softmax(logits), ids, labels, 0.3, keep);
      if (ce.tracked()) t.backward(ce);
      const std::vector<double> zeros(rows * 2, 0.0);
      const auto grad = logits.has_grad() ? logits.grad() : std::span<const double>(zeros);
      std::vector<bool> live(words, true);
      for (std::size_t w = 0; w < words; ++w) {
        if (labels[w] == 0) live[w] = uniform_unit(replay) < 0.3;
      }
      for (std::size_t r : wr) {
        const auto w = static_cast<std::size_t>(ids[r]);
        const double g0 = grad[2 * r], g1 = grad[2 * r + 1];
        if (live[w]) {
          live_nonzero = live_nonzero && (g0 != 0.0 || g1 != 0.0);
        } else {
          dead_zero = dead_zero && g0 == 0.0 && g1 == 0.0;
        }
      }
    }
  }

  // alpha = 0 against SLR off over 100 steps.
  const auto data = toy_training_set(200, 3);
  std::vector<std::vector<std::string>> sentences;
  for (const auto& ex : data) {
    sentences.push_back(ex.src);
    sentences.push_back(ex.hyp);
  }
  const auto vocab = dataio::Vocabulary::from_words(sentences);
  model::EncoderConfig mc;
  mc.d_model = 32;
  mc.d_ff = 64;
  mc.classifier_hidden = {96, 32, 2};
  mc.vocab_size = vocab.size();
  mc.seed = 4;
  const auto init = model::init_params(mc);
  cli::TrainConfig off;
  off.steps = 100;
  off.batch = 4;
  off.seed = 5;
  off.adam.lr_scale = 100;
  cli::TrainConfig zero = off;
  zero.slr = true;
  zero.alpha = 0.0;
  const auto a = cli::train(init.clone(), vocab, data, off);
  const auto b = cli::train(init.clone(), vocab, data, zero);
  const bool bitwise = a.same_values(b) && !a.same_values(init);

  const bool ok = pair_zero && dead_zero && live_nonzero && total_matches_ce && bitwise;
  std::string d = std::string("pair-path grad zero: ") + (pair_zero && total_matches_ce ? "yes" : "no") +
                  ", detached CE grad zero: " + (dead_zero && live_nonzero ? "yes" : "no") +
                  ", alpha=0 vs off after 100 steps bitwise: " + (bitwise ? "yes" : "no");
  return {ok, d};
}

// ---- 3 ------------------------------------------------------------------

Outcome single_sentence_equivalence() {
  Rng rng = make_stream(301, {});
  std::size_t equal = 0;
  const std::size_t trials = 1000;
  std::optional<model::EncoderParams> params;
  std::optional<dataio::Vocabulary> vocab;
  std::vector<std::string> lexicon;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    if (trial % 100 == 0) {
      lexicon.clear();
      for (int i = 0; i < 30; ++i) {
        std::string w;
        for (std::size_t k = 0, n = 1 + uniform_index(rng, 6); k < n; ++k) w += static_cast<char>('a' + uniform_index(rng, 26));
        lexicon.push_back(w);
      }
      vocab = dataio::Vocabulary::from_words(std::vector<std::vector<std::string>>{lexicon});
      model::EncoderConfig c;
      c.n_layers = 1 + uniform_index(rng, 2);
      c.n_heads = 2;
      c.d_model = 8 * (1 + uniform_index(rng, 3));
      c.d_ff = 2 * c.d_model;
      c.vocab_size = vocab->size();
      c.max_positions = 32;
      c.classifier_hidden = {c.d_model, 2};
      c.seed = trial;
      params = model::init_params(c);
    }
    std::vector<std::string> hyp, src;
    for (std::size_t i = 0, n = 1 + uniform_index(rng, 6); i < n; ++i) hyp.push_back(lexicon[uniform_index(rng, lexicon.size())]);
    for (std::size_t i = 0, n = 1 + uniform_index(rng, 6); i < n; ++i) src.push_back(lexicon[uniform_index(rng, lexicon.size())]);

    Tape t = Tape::inference();
    const auto pair = model::make_pair_input(*vocab, hyp, src, model::AttentionMode::kBlockCross);
    const Tensor hp = model::encode(t, *params, pair);
    const Tensor hh = model::encode(t, *params, model::make_single_input(*vocab, hyp, Side::kHyp));
    const Tensor hs = model::encode(t, *params, model::make_single_input(*vocab, src, Side::kSrc));
    const auto pv = hp.values();
    const std::size_t split = hh.size();
    equal += hp.rows() == hh.rows() + hs.rows() && same_bits(pv.subspan(0, split), hh.values()) &&
             same_bits(pv.subspan(split), hs.values());
  }
  return {equal == trials, std::to_string(equal) + "/" + std::to_string(trials) + " inputs bitwise equal"};
}

// ---- 4 ------------------------------------------------------------------

Outcome beam_fill_oracle() {
  Rng rng = make_stream(401, {});
  std::size_t exact = 0;
  const std::size_t trials = 200;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const std::size_t v = 1 + uniform_index(rng, 6);
    const std::size_t masks = 1 + uniform_index(rng, 3);
    // vocab^masks covers the final fills; the widest intermediate frontier,
    // C(masks, k) vocab^k, can exceed it (vocab 2, 3 masks: 12 > 8), and a
    // pruned frontier may lose the best order for some sentence.
    std::size_t beam = 1, frontier = 0;
    for (std::size_t k = 1; k <= masks; ++k) {
      beam *= v;
      std::size_t choose = 1;
      for (std::size_t i = 0; i < k; ++i) choose = choose * (masks - i) / (i + 1);
      frontier = std::max(frontier, choose * beam);
    }
    beam = std::max(beam, frontier) + uniform_index(rng, 3);
    std::vector<std::string> cands;
    for (std::size_t i = 0; i < v; ++i) cands.push_back(std::string(1, static_cast<char>('a' + i)));
    const testing::HashFiller filler(cands, rng());
    synthgen::MaskedSentence m;
    m.tokens = {"p", "q", "r"};
    const std::size_t gap = uniform_index(rng, 4);
    m.tokens.insert(m.tokens.begin() + static_cast<std::ptrdiff_t>(gap), masks, "[MASK]");
    m.inserted_spans.push_back({gap, masks});
    const auto got = synthgen::recursive_beam_fill(m, filler, beam);
    const auto want = testing::exhaustive_fill(m.tokens, filler);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].words == want[i].words &&
             std::abs(got[i].log_score - want[i].log_score) <= 1e-12 * std::max(1.0, std::abs(want[i].log_score));
    }
    exact += same;
  }
  return {exact == trials, std::to_string(exact) + "/" + std::to_string(trials) + " rankings identical"};
}

// ---- 5 ------------------------------------------------------------------

Outcome rerank_and_sampling() {
  Rng rng = make_stream(501, {});
  std::size_t rerank_ok = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 10);
    std::vector<synthgen::Candidate> cands;
    std::map<std::vector<std::string>, double> ppl;
    std::set<std::vector<std::string>> used;
    while (cands.size() < n) {
      std::vector<std::string> w{std::string(1, static_cast<char>('a' + uniform_index(rng, 4))),
                                 std::string(1, static_cast<char>('a' + uniform_index(rng, 4)))};
      if (!used.insert(w).second) continue;
      cands.push_back({w, -static_cast<double>(uniform_index(rng, 3))});
      ppl[w] = 1.0 + static_cast<double>(uniform_index(rng, 3));
    }
    std::vector<double> p;
    for (const auto& c : cands) p.push_back(ppl[c.words]);
    const auto ranked = synthgen::rerank(cands, [&](std::span<const std::string> w) {
      return ppl.at(std::vector<std::string>(w.begin(), w.end()));
    });
    const auto order = testing::naive_rerank_order(cands, p);
    bool same = ranked.size() == n;
    for (std::size_t i = 0; same && i < n; ++i) same = ranked[i].candidate.words == cands[order[i]].words;
    rerank_ok += same;
  }

  const std::size_t draws = 10000;
  std::vector<synthgen::Candidate> eight;
  for (std::size_t i = 0; i < 8; ++i) eight.push_back({{std::string(1, static_cast<char>('a' + i))}, -double(i)});
  const auto ranked = synthgen::rerank(eight, [](std::span<const std::string> w) { return double(w[0][0]); });
  std::vector<std::size_t> picks(8, 0);
  Rng pr = make_stream(502, {});
  for (std::size_t i = 0; i < draws; ++i) ++picks[static_cast<std::size_t>(&synthgen::pick(ranked, 8, pr) - ranked.data())];
  const bool pick_ok = testing::within_three_sigma(picks, 1.0 / 8.0);

  synthgen::SynthConfig cfg;
  const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  std::vector<std::size_t> gaps(words.size() + 1, 0), runs(cfg.max_consecutive_masks, 0);
  Rng mr = make_stream(503, {});
  for (std::size_t i = 0; i < draws; ++i) {
    const auto span = synthgen::insert_masks(words, mr, cfg).inserted_spans[0];
    ++gaps[span.start];
    ++runs[span.length - 1];
  }
  const bool gap_ok = testing::within_three_sigma(gaps, 1.0 / 7.0);
  const bool run_ok = testing::within_three_sigma(runs, 1.0 / 5.0);

  const auto examples = toy_training_set(draws, 504);
  std::vector<std::size_t> sides(2, 0);
  for (const auto& ex : examples) ++sides[ex.provenance.side == Side::kHyp ? 0 : 1];
  const bool side_ok = examples.size() == draws && testing::within_three_sigma(sides, 0.5);

  const bool ok = rerank_ok == 500 && pick_ok && gap_ok && run_ok && side_ok;
  std::string d = "rerank " + std::to_string(rerank_ok) + "/500; 3-sigma uniform: top-k " +
                  (pick_ok ? "yes" : "no") + ", gap " + (gap_ok ? "yes" : "no") + ", run length " +
                  (run_ok ? "yes" : "no") + ", side " + (side_ok ? "yes" : "no") + " (hyp " +
                  std::to_string(sides[0]) + " / src " + std::to_string(sides[1]) + ")";
  return {ok, d};
}

// ---- 6 ------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng = make_stream(601, {});
  double worst = 0.0;
  auto gap = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<AnnotatedExample> gold;
    std::vector<ExamplePredictions> preds;
    std::vector<std::vector<double>> aw, ow;
    std::vector<std::vector<int>> hp, sp;
    for (std::size_t e = 0, n = 1 + uniform_index(rng, 5); e < n; ++e) {
      AnnotatedExample ex;
      ex.id = "r" + std::to_string(e);
      for (std::size_t i = 0, k = 1 + uniform_index(rng, 8); i < k; ++i) ex.hyp.push_back("h" + std::to_string(i));
      for (std::size_t i = 0, k = 1 + uniform_index(rng, 8); i < k; ++i) ex.src.push_back("s" + std::to_string(i));
      std::vector<double> a(ex.hyp.size(), 0.0), o(ex.src.size(), 0.0);
      for (std::size_t k = uniform_index(rng, 4); k > 0; --k) {
        const bool hyp = uniform_index(rng, 2) == 0;
        const std::size_t len = hyp ? ex.hyp.size() : ex.src.size();
        const std::size_t s = uniform_index(rng, len);
        const std::size_t t = s + 1 + uniform_index(rng, len - s);
        const int ann = 1 + static_cast<int>(uniform_index(rng, 3));
        ex.spans.push_back({hyp ? Side::kHyp : Side::kSrc, s, t, hyp ? ErrorType::kAddition : ErrorType::kOmission, ann});
        for (std::size_t i = s; i < t; ++i) (hyp ? a : o)[i] += ann;
      }
      std::vector<int> h(ex.hyp.size()), s(ex.src.size());
      ExamplePredictions p{ex.id, {}};
      for (std::size_t i = 0; i < h.size(); ++i) {
        h[i] = static_cast<int>(uniform_index(rng, 2));
        p.preds.push_back({Side::kHyp, i, double(h[i]), h[i]});
      }
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = static_cast<int>(uniform_index(rng, 2));
        p.preds.push_back({Side::kSrc, i, double(s[i]), s[i]});
      }
      gold.push_back(std::move(ex));
      preds.push_back(std::move(p));
      aw.push_back(a);
      ow.push_back(o);
      hp.push_back(h);
      sp.push_back(s);
    }
    const auto add = eval::weighted_prf(gold, preds, ErrorType::kAddition, Side::kHyp);
    const auto om = eval::weighted_prf(gold, preds, ErrorType::kOmission, Side::kSrc);
    const auto na = testing::naive_weighted_prf(aw, hp), no = testing::naive_weighted_prf(ow, sp);
    gap(add.precision, na.p);
    gap(add.recall, na.r);
    gap(add.f1, na.f);
    gap(om.precision, no.p);
    gap(om.recall, no.r);
    gap(om.f1, no.f);
  }

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> p(200), q(200);
    const std::uint64_t bias = 1 + uniform_index(rng, 9);
    for (auto& x : p) x = uniform_index(rng, 10) < bias;
    for (auto& x : q) x = uniform_index(rng, 10) < bias;
    const auto got = eval::mcc_report(p, q);
    const auto want = testing::naive_mcc(p, q);
    gap(got.mcc, want.mcc);
    gap(got.f1_ok, want.f1_ok);
    gap(got.f1_bad, want.f1_bad);
  }

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::pair<double, double>> pairs(1 + uniform_index(rng, 500));
    for (auto& [a, b] : pairs) {
      a = static_cast<double>(uniform_index(rng, 50));
      b = static_cast<double>(uniform_index(rng, 50));
    }
    gap(eval::kendall_tau_like(pairs), testing::naive_tau(pairs));
  }

  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> probs(1 + uniform_index(rng, 300));
    for (auto& x : probs) {
      // Mix in exact bucket edges.
      x = uniform_index(rng, 4) == 0 ? static_cast<double>(uniform_index(rng, 21)) / 20.0 : uniform_unit(rng);
    }
    const auto h = eval::prob_histogram(probs, 20);
    const auto want = testing::naive_histogram(probs, 20);
    for (std::size_t i = 0; i < 20; ++i) gap(h.proportions[i], want[i]);
  }

  const double line13[] = {18.1, 39.5, 42.0, 19.4};
  const double line7[] = {11.5, 33.8, 40.2, 11.3};
  const double a13 = eval::round1(eval::avg_f1(line13));
  const double a7 = eval::round1(eval::avg_f1(line7));
  const bool ok = worst <= 1e-12 && a13 == 29.8 && a7 == 24.2;
  return {ok, "4x1000 cases, worst gap " + fmt(worst) + "; published rows average to " + fmt(a13) +
                  " and " + fmt(a7)};
}

// ---- 10 -----------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome data_plumbing() {
  Rng rng = make_stream(1001, {});
  std::size_t split_ok = 0;
  const std::size_t trials = 10000;
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    const std::size_t n = 3 + uniform_index(rng, 40);
    const std::size_t n_groups = 3 + uniform_index(rng, n - 2);
    std::vector<std::string> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = std::to_string(i < n_groups ? i : uniform_index(rng, n_groups));
    const auto s = dataio::grouped_split(keys, {1, 1, 8}, trial);
    std::map<std::string, std::size_t> size;
    std::size_t largest = 0;
    for (const auto& k : keys) largest = std::max(largest, ++size[k]);
    std::vector<int> where(n, -1);
    bool ok = true;
    int subset = 0;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
      for (std::size_t i : *part) {
        ok = ok && where[i] == -1;
        where[i] = subset;
      }
      ++subset;
    }
    std::map<std::string, int> home;
    for (std::size_t i = 0; i < n; ++i) {
      ok = ok && where[i] != -1;
      ok = ok && home.emplace(keys[i], where[i]).first->second == where[i];
    }
    const double targets[3] = {n * 0.1, n * 0.1, n * 0.8};
    const std::size_t sizes[3] = {s.train.size(), s.dev.size(), s.test.size()};
    for (int k = 0; k < 3; ++k) ok = ok && std::abs(double(sizes[k]) - targets[k]) <= double(largest);
    split_ok += ok;
  }

  // Byte-exact round trip.
  testing::TempDir dir;
  std::vector<AnnotatedExample> examples;
  static const std::vector<std::string> glyphs = {"a", "q", "\xc3\xa9", "\xce\xb2", "\"", "\\", "\xe6\x97\xa5", " "};
  for (std::size_t i = 0; i < 1000; ++i) {
    AnnotatedExample ex;
    ex.id = "r-" + std::to_string(i);
    auto word = [&] {
      std::string w;
      for (std::size_t k = 0, n = 1 + uniform_index(rng, 6); k < n; ++k) w += glyphs[uniform_index(rng, glyphs.size())];
      return w;
    };
    for (std::size_t k = 0, n = 1 + uniform_index(rng, 9); k < n; ++k) ex.src.push_back(word());
    for (std::size_t k = 0, n = 1 + uniform_index(rng, 9); k < n; ++k) ex.hyp.push_back(word());
    for (std::size_t k = uniform_index(rng, 4); k > 0; --k) {
      dataio::ErrorSpan s;
      s.type = uniform_index(rng, 2) ? ErrorType::kAddition : ErrorType::kOmission;
      s.side = dataio::canonical_side(s.type);
      const std::size_t len = ex.words(s.side).size();
      s.start = uniform_index(rng, len);
      s.end = s.start + 1 + uniform_index(rng, len - s.start);
      s.annotators = 1 + static_cast<int>(uniform_index(rng, 3));
      ex.spans.push_back(s);
    }
    examples.push_back(std::move(ex));
  }
  dataio::write_examples(dir / "a.jsonl", examples);
  const auto back = dataio::read_examples(dir / "a.jsonl");
  dataio::write_examples(dir / "b.jsonl", back);
  const bool round_trip = back == examples && slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl");

  // Seed legacy placements into a clean set and count the flags.
  std::set<std::size_t> seeded;
  while (seeded.size() < 137) seeded.insert(uniform_index(rng, examples.size()));
  std::size_t flagged_exact = 0, flags = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    AnnotatedExample ex = examples[i];
    if (seeded.count(i)) {
      const bool omission = uniform_index(rng, 2) == 0;
      ex.spans.push_back({omission ? Side::kHyp : Side::kSrc, 0, 1,
                          omission ? ErrorType::kOmission : ErrorType::kAddition, 1});
    }
    const auto r = dataio::validate_format(ex);
    flags += r.violations.size();
    flagged_exact += (r.violations.size() == 1) == (seeded.count(i) == 1);
  }
  const bool validate_ok = flags == seeded.size() && flagged_exact == examples.size();

  const bool ok = split_ok == trials && round_trip && validate_ok;
  return {ok, "split " + std::to_string(split_ok) + "/" + std::to_string(trials) + " within one group size" +
                  ", round trip " + (round_trip ? "byte-exact" : "differs") + ", legacy flags " +
                  std::to_string(flags) + "/" + std::to_string(seeded.size())};
}

}  // namespace

std::vector<Criterion> property_criteria() {
  return {
      {1, "gradient correctness", gradient_correctness},
      {2, "detachment semantics", detachment},
      {3, "single-sentence equivalence", single_sentence_equivalence},
      {4, "beam-fill oracle", beam_fill_oracle},
      {5, "rerank oracle and sampling laws", rerank_and_sampling},
      {6, "metric oracles", metric_oracles},
      {10, "data plumbing", data_plumbing},
  };
}

}  // namespace fgted::acceptance
