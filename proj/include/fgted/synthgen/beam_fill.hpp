#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fgted/dataio/tokenize.hpp"
#include "fgted/model/config.hpp"
#include "fgted/numerics/rng.hpp"
#include "fgted/synthgen/masking.hpp"

namespace fgted::synthgen {

// Supplies fill distributions over a fixed candidate word list.
class Filler {
 public:
  virtual ~Filler() = default;
  virtual const std::vector<std::string>& candidates() const = 0;
  // One probability row over candidates() per queried mask position, each
  // conditioned on the current partial sentence.
  virtual std::vector<std::vector<double>> distributions(
      std::span<const std::string> words, std::span<const std::size_t> mask_positions) const = 0;
};

// Masked-LM filler. Each candidate must be a single token of the vocabulary;
// the MLM distribution at a mask row is restricted to the candidates and
// renormalised.
class MlmFiller : public Filler {
 public:
  MlmFiller(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
            dataio::Side side, std::vector<std::string> candidates);

  const std::vector<std::string>& candidates() const override { return candidates_; }
  std::vector<std::vector<double>> distributions(
      std::span<const std::string> words,
      std::span<const std::size_t> mask_positions) const override;

 private:
  const model::EncoderParams& params_;
  const dataio::Vocabulary& vocab_;
  dataio::Side side_;
  std::vector<std::string> candidates_;
  std::vector<std::size_t> candidate_ids_;
};

struct Candidate {
  std::vector<std::string> words;
  double log_score = 0.0;
};

// Beam search over fill order and fill tokens. Each iteration expands every
// state at every remaining mask with that mask's top-`beam` candidates,
// merges states with identical partial fills (keeping the higher score) and
// keeps the best `beam` states; ties go to the lexicographically smaller
// sentence. Returns complete fills sorted by descending score.
std::vector<Candidate> recursive_beam_fill(const MaskedSentence& masked, const Filler& filler,
                                           std::size_t beam);

using PerplexityFn = std::function<double(std::span<const std::string>)>;

// MLM pseudo-perplexity of a word sequence laid out as a single sentence.
PerplexityFn mlm_perplexity(const model::EncoderParams& params, const dataio::Vocabulary& vocab,
                            dataio::Side side);

struct RankedCandidate {
  Candidate candidate;
  double perplexity = 0.0;
};

// Ascending perplexity, then descending beam score, then lexicographic.
std::vector<RankedCandidate> rerank(const std::vector<Candidate>& candidates,
                                    const PerplexityFn& perplexity);

// Uniform choice among the first min(top_k, n) ranked candidates.
const RankedCandidate& pick(const std::vector<RankedCandidate>& ranked, std::size_t top_k,
                            Rng& rng);

Candidate rerank_and_pick(const std::vector<Candidate>& candidates,
                          const PerplexityFn& perplexity, std::size_t top_k, Rng& rng);

}  // namespace fgted::synthgen
