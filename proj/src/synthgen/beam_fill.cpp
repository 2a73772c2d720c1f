#include "fgted/synthgen/beam_fill.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fgted/model/encoder.hpp"
#include "fgted/numerics/errors.hpp"

namespace fgted::synthgen {

using dataio::Side;

MlmFiller::MlmFiller(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                     Side side, std::vector<std::string> candidates)
    : params_(params), vocab_(vocab), side_(side), candidates_(std::move(candidates)) {
  if (candidates_.empty()) throw UsageError("filler needs at least one candidate word");
  for (const auto& w : candidates_) {
    const auto ids = vocab_.encode_word(w);
    if (ids.size() != 1 || dataio::Vocabulary::is_special(ids[0])) {
      throw UsageError("filler candidate '" + w + "' is not a single vocabulary token");
    }
    candidate_ids_.push_back(static_cast<std::size_t>(ids[0]));
  }
}

std::vector<std::vector<double>> MlmFiller::distributions(
    std::span<const std::string> words, std::span<const std::size_t> mask_positions) const {
  std::vector<int> tokens;
  std::vector<std::size_t> first_row(words.size());
  const std::size_t offset = side_ == Side::kHyp ? 1 : 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    first_row[i] = offset + tokens.size();
    const auto ids = vocab_.encode_word(words[i]);
    tokens.insert(tokens.end(), ids.begin(), ids.end());
  }
  std::vector<std::size_t> rows;
  for (std::size_t p : mask_positions) rows.push_back(first_row.at(p));

  numerics::Tape tape = numerics::Tape::inference();
  const auto hidden = model::encode(tape, params_, model::single_layout(tokens, side_));
  const auto logits = model::mlm_logits(tape, params_, hidden, rows);
  std::vector<std::vector<double>> out(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t id : candidate_ids_) mx = std::max(mx, logits.at(r, id));
    double z = 0.0;
    out[r].reserve(candidate_ids_.size());
    for (std::size_t id : candidate_ids_) {
      out[r].push_back(std::exp(logits.at(r, id) - mx));
      z += out[r].back();
    }
    for (double& v : out[r]) v /= z;
  }
  return out;
}

namespace {

struct State {
  std::vector<std::string> words;
  double score = 0.0;
};

bool better(const State& a, const State& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.words < b.words;
}

void check_distribution(const std::vector<double>& row, std::size_t n) {
  if (row.size() != n) throw NumericError("filler row has the wrong width");
  double total = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) throw NumericError("filler returned an invalid probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) throw NumericError("filler row does not sum to 1");
}

}  // namespace

std::vector<Candidate> recursive_beam_fill(const MaskedSentence& masked, const Filler& filler,
                                           std::size_t beam) {
  if (beam < 1) throw UsageError("beam must be >= 1");
  const std::size_t n_masks = masked.mask_positions().size();
  if (n_masks == 0) throw UsageError("nothing to fill: no [MASK] in sentence");
  const auto& vocab = filler.candidates();

  std::vector<State> states{{masked.tokens, 0.0}};
  for (std::size_t iter = 0; iter < n_masks; ++iter) {
    std::map<std::vector<std::string>, double> merged;
    for (const State& s : states) {
      std::vector<std::size_t> open;
      for (std::size_t i = 0; i < s.words.size(); ++i) {
        if (is_mask(s.words[i])) open.push_back(i);
      }
      const auto dists = filler.distributions(s.words, open);
      if (dists.size() != open.size()) throw NumericError("filler returned too few rows");
      for (std::size_t m = 0; m < open.size(); ++m) {
        check_distribution(dists[m], vocab.size());
        std::vector<std::size_t> order(vocab.size());
        std::iota(order.begin(), order.end(), 0);
        const std::size_t keep = std::min(beam, order.size());
        // Top tokens by probability; ties to the smaller word.
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                          order.end(), [&](std::size_t a, std::size_t b) {
                            if (dists[m][a] != dists[m][b]) return dists[m][a] > dists[m][b];
                            return vocab[a] < vocab[b];
                          });
        for (std::size_t k = 0; k < keep; ++k) {
          const double p = dists[m][order[k]];
          if (p <= 0.0) continue;
          std::vector<std::string> next = s.words;
          next[open[m]] = vocab[order[k]];
          const double score = s.score + std::log(p);
          auto [it, fresh] = merged.emplace(std::move(next), score);
          if (!fresh) it->second = std::max(it->second, score);
        }
      }
    }
    states.clear();
    for (auto& [words, score] : merged) states.push_back({words, score});
    std::sort(states.begin(), states.end(), better);
    if (states.size() > beam) states.resize(beam);
    if (states.empty()) throw NumericError("filler assigned zero probability everywhere");
  }

  std::vector<Candidate> out;
  for (auto& s : states) out.push_back({std::move(s.words), s.score});
  return out;
}

PerplexityFn mlm_perplexity(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                            Side side) {
  return [&params, &vocab, side](std::span<const std::string> words) {
    std::vector<int> tokens;
    for (const auto& w : words) {
      const auto ids = vocab.encode_word(w);
      tokens.insert(tokens.end(), ids.begin(), ids.end());
    }
    return model::pseudo_perplexity(params, tokens, side);
  };
}

std::vector<RankedCandidate> rerank(const std::vector<Candidate>& candidates,
                                    const PerplexityFn& perplexity) {
  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (const auto& c : candidates) ranked.push_back({c, perplexity(c.words)});
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.perplexity != b.perplexity) return a.perplexity < b.perplexity;
    if (a.candidate.log_score != b.candidate.log_score) {
      return a.candidate.log_score > b.candidate.log_score;
    }
    return a.candidate.words < b.candidate.words;
  });
  return ranked;
}

const RankedCandidate& pick(const std::vector<RankedCandidate>& ranked, std::size_t top_k,
                            Rng& rng) {
  if (ranked.empty()) throw UsageError("no candidates to pick from");
  if (top_k < 1) throw UsageError("top_k must be >= 1");
  return ranked[uniform_index(rng, std::min(top_k, ranked.size()))];
}

Candidate rerank_and_pick(const std::vector<Candidate>& candidates,
                          const PerplexityFn& perplexity, std::size_t top_k, Rng& rng) {
  if (candidates.size() == 1) return candidates.front();
  return pick(rerank(candidates, perplexity), top_k, rng).candidate;
}

}  // namespace fgted::synthgen
