#include "fgted/model/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "fgted/numerics/errors.hpp"

namespace fgted::model {

using dataio::kClsId;
using dataio::kMaskId;
using dataio::kSepId;
using dataio::Side;
using numerics::KeyRange;

std::vector<std::size_t> SegmentedInput::positions() const {
  std::vector<std::size_t> pos(segment_ids.size());
  std::size_t p = 0;
  for (std::size_t i = 0; i < segment_ids.size(); ++i) {
    if (i > 0 && segment_ids[i] != segment_ids[i - 1]) p = 0;
    pos[i] = p++;
  }
  return pos;
}

std::pair<std::size_t, std::size_t> SegmentedInput::segment_range(int segment) const {
  auto first = std::find(segment_ids.begin(), segment_ids.end(), segment);
  auto last = std::find_if(first, segment_ids.end(), [&](int s) { return s != segment; });
  return {static_cast<std::size_t>(first - segment_ids.begin()),
          static_cast<std::size_t>(last - segment_ids.begin())};
}

namespace {

void append_block(SegmentedInput& in, std::span<const int> tokens, Side side) {
  const int seg = side == Side::kHyp ? 0 : 1;
  auto push = [&](int id) {
    in.token_ids.push_back(id);
    in.segment_ids.push_back(seg);
    in.word_ids.push_back(-1);
  };
  if (side == Side::kHyp) push(kClsId);
  for (int t : tokens) push(t);
  push(kSepId);
}

// Sets word_ids for the tokens of one block given per-word token counts.
void assign_words(SegmentedInput& in, std::size_t first_token,
                  const std::vector<std::vector<int>>& encoded, int word_offset) {
  std::size_t t = first_token;
  for (std::size_t w = 0; w < encoded.size(); ++w) {
    for (std::size_t k = 0; k < encoded[w].size(); ++k) {
      in.word_ids[t++] = word_offset + static_cast<int>(w);
    }
  }
}

std::pair<std::vector<int>, std::vector<std::vector<int>>> encode_words(
    const dataio::Vocabulary& vocab, std::span<const std::string> words) {
  std::vector<int> flat;
  std::vector<std::vector<int>> per_word;
  for (const auto& w : words) {
    per_word.push_back(vocab.encode_word(w));
    flat.insert(flat.end(), per_word.back().begin(), per_word.back().end());
  }
  return {std::move(flat), std::move(per_word)};
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  return tape.add(tape.matmul(x, w), b);
}

Tensor maybe_dropout(Tape& tape, const Tensor& x, DropoutStream* dropout) {
  if (dropout == nullptr || dropout->rate() == 0.0) return x;
  return tape.dropout(x, dropout->mask(x.shape()), dropout->rate());
}

}  // namespace

SegmentedInput pair_layout(std::span<const int> hyp_tokens, std::span<const int> src_tokens,
                           AttentionMode mode) {
  SegmentedInput in;
  in.attention_mode = mode;
  append_block(in, hyp_tokens, Side::kHyp);
  append_block(in, src_tokens, Side::kSrc);
  return in;
}

SegmentedInput single_layout(std::span<const int> tokens, Side side) {
  SegmentedInput in;
  append_block(in, tokens, side);
  return in;
}

SegmentedInput make_pair_input(const dataio::Vocabulary& vocab, std::span<const std::string> hyp,
                               std::span<const std::string> src, AttentionMode mode) {
  auto [h, h_words] = encode_words(vocab, hyp);
  auto [s, s_words] = encode_words(vocab, src);
  SegmentedInput in = pair_layout(h, s, mode);
  assign_words(in, 1, h_words, 0);
  assign_words(in, h.size() + 2, s_words, static_cast<int>(hyp.size()));
  in.hyp_word_count = hyp.size();
  in.src_word_count = src.size();
  return in;
}

SegmentedInput make_single_input(const dataio::Vocabulary& vocab,
                                 std::span<const std::string> words, Side side) {
  auto [t, per_word] = encode_words(vocab, words);
  SegmentedInput in = single_layout(t, side);
  assign_words(in, side == Side::kHyp ? 1 : 0, per_word, 0);
  (side == Side::kHyp ? in.hyp_word_count : in.src_word_count) = words.size();
  return in;
}

DropoutStream::DropoutStream(std::uint64_t seed, double rate)
    : rng_(make_stream(seed, {0xd209})), rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout rate must be in [0, 1)");
}

Tensor DropoutStream::mask(const Shape& shape) {
  std::vector<double> m(numerics::shape_size(shape));
  for (double& v : m) v = uniform_unit(rng_) >= rate_ ? 1.0 : 0.0;
  return Tensor::from_values(shape, std::move(m));
}

Tensor encode(Tape& tape, const EncoderParams& params, const SegmentedInput& input,
              DropoutStream* dropout) {
  const EncoderConfig& c = params.config();
  const std::size_t n = input.length();
  if (n == 0) throw DataError("empty input");
  if (input.segment_ids.size() != n || input.word_ids.size() != n) {
    throw DataError("segmented input fields differ in length");
  }
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int t = input.token_ids[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab_size) {
      throw DataError("token id " + std::to_string(t) + " outside vocabulary of " +
                      std::to_string(c.vocab_size));
    }
    if (input.segment_ids[i] != 0 && input.segment_ids[i] != 1) {
      throw DataError("segment ids must be 0 or 1");
    }
    if (i > 0 && input.segment_ids[i] < input.segment_ids[i - 1]) {
      throw DataError("segment ids must be nondecreasing");
    }
    ids[i] = static_cast<std::size_t>(t);
  }
  const auto pos = input.positions();
  std::vector<std::size_t> pos_rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pos[i] >= c.max_positions) {
      throw DataError("segment longer than max_positions (" + std::to_string(c.max_positions) +
                      ")");
    }
    pos_rows[i] = static_cast<std::size_t>(input.segment_ids[i]) * c.max_positions + pos[i];
  }

  std::vector<KeyRange> ranges(n);
  if (input.attention_mode == AttentionMode::kFull) {
    std::fill(ranges.begin(), ranges.end(), KeyRange{0, n});
  } else {
    for (int seg : {0, 1}) {
      auto [b, e] = input.segment_range(seg);
      for (std::size_t i = b; i < e; ++i) ranges[i] = {b, e};
    }
  }

  Tensor x = tape.add(tape.gather_rows(params.at("embed.token"), ids),
                      tape.gather_rows(params.at("embed.position"), pos_rows));
  x = tape.layer_norm(x, params.at("embed.ln.gain"), params.at("embed.ln.bias"));
  x = maybe_dropout(tape, x, dropout);

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto w = [&](const char* name) -> const Tensor& { return params.at(p + name); };
    Tensor q = linear(tape, x, w("attn.wq"), w("attn.bq"));
    Tensor k = linear(tape, x, w("attn.wk"), w("attn.bk"));
    Tensor v = linear(tape, x, w("attn.wv"), w("attn.bv"));
    Tensor a = tape.attention(q, k, v, c.n_heads, ranges);
    a = maybe_dropout(tape, linear(tape, a, w("attn.wo"), w("attn.bo")), dropout);
    x = tape.layer_norm(tape.add(x, a), w("ln1.gain"), w("ln1.bias"));

    Tensor f = tape.gelu(linear(tape, x, w("ff.w1"), w("ff.b1")));
    f = maybe_dropout(tape, linear(tape, f, w("ff.w2"), w("ff.b2")), dropout);
    x = tape.layer_norm(tape.add(x, f), w("ln2.gain"), w("ln2.bias"));
  }
  return x;
}

Tensor classify_tokens(Tape& tape, const EncoderParams& params, const Tensor& hidden,
                       DropoutStream* dropout) {
  const auto& widths = params.config().classifier_hidden;
  if (hidden.cols() != params.config().d_model) {
    throw DimensionError("classifier input width " + std::to_string(hidden.cols()) +
                         " != d_model");
  }
  Tensor x = hidden;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "classifier." + std::to_string(i) + ".";
    x = linear(tape, x, params.at(p + "weight"), params.at(p + "bias"));
    if (i + 1 < widths.size()) x = maybe_dropout(tape, tape.tanh(x), dropout);
  }
  return x;
}

Tensor mlm_logits(Tape& tape, const EncoderParams& params, const Tensor& hidden,
                  std::span<const std::size_t> positions) {
  if (positions.empty()) throw UsageError("mlm_logits needs at least one position");
  for (std::size_t p : positions) {
    if (p >= hidden.rows()) {
      throw UsageError("mlm position " + std::to_string(p) + " outside sequence of " +
                       std::to_string(hidden.rows()));
    }
  }
  Tensor h = tape.gather_rows(hidden, positions);
  h = tape.gelu(linear(tape, h, params.at("mlm.dense.weight"), params.at("mlm.dense.bias")));
  h = tape.layer_norm(h, params.at("mlm.ln.gain"), params.at("mlm.ln.bias"));
  return linear(tape, h, params.at("mlm.decoder.weight"), params.at("mlm.decoder.bias"));
}

double pseudo_perplexity(const EncoderParams& params, std::span<const int> tokens, Side side) {
  if (tokens.empty()) throw UsageError("pseudo-perplexity of an empty sentence");
  const std::size_t offset = side == Side::kHyp ? 1 : 0;
  std::vector<int> masked(tokens.begin(), tokens.end());
  double nll = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    masked[t] = kMaskId;
    Tape tape = Tape::inference();
    const Tensor hidden = encode(tape, params, single_layout(masked, side));
    const std::size_t row = t + offset;
    const Tensor logits = mlm_logits(tape, params, hidden, std::span(&row, 1));
    auto z = logits.values();
    const double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - mx);
    nll += -(z[static_cast<std::size_t>(tokens[t])] - mx - std::log(denom));
    masked[t] = tokens[t];
  }
  return std::exp(nll / static_cast<double>(tokens.size()));
}

}  // namespace fgted::model
