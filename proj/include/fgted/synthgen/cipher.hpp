#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace fgted::synthgen {

struct ParallelPair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;

  bool operator==(const ParallelPair&) const = default;
};

// Source word -> target word.
using Alignment = std::map<std::string, std::string>;

struct CipherCorpus {
  std::vector<ParallelPair> pairs;
  Alignment alignment;
};

inline constexpr std::size_t kMinSentenceWords = 4;
inline constexpr std::size_t kMaxSentenceWords = 12;
// Words are 2-3 letters over 13-letter alphabets; keep well below the 2366
// distinct strings so lexicon sampling stays fast.
inline constexpr std::size_t kMaxCipherVocab = 1000;

// Source sentences come from a seeded sparse bigram chain over vocab_size
// source words; each target is the word-wise image under a seeded bijection
// onto a disjoint target alphabet, with its second half reversed.
CipherCorpus cipher_corpus(std::size_t n, std::size_t vocab_size, std::uint64_t seed);

// Words of each language that are a single subword (fill candidates).
std::vector<std::string> single_token_words(const Alignment& alignment, bool target_side);

using PairScorer = std::function<double(const ParallelPair&)>;

// Fraction of target words that are the image of some word in the source.
double alignment_overlap(const ParallelPair& pair, const Alignment& alignment);
PairScorer alignment_scorer(const Alignment& alignment);

struct FilterReport {
  std::vector<ParallelPair> retained;
  std::size_t input = 0;
  std::size_t below_threshold = 0;
  std::size_t scorer_failures = 0;
};

// Keeps pairs scoring >= threshold, in order. A scorer that throws or returns
// a non-finite score drops the pair and is counted.
FilterReport filter_pairs(const std::vector<ParallelPair>& pairs, const PairScorer& scorer,
                          double threshold);

void write_corpus(const std::filesystem::path& path, const std::vector<ParallelPair>& pairs);
std::vector<ParallelPair> read_corpus(const std::filesystem::path& path);
void write_alignment(const std::filesystem::path& path, const Alignment& alignment);
Alignment read_alignment(const std::filesystem::path& path);

}  // namespace fgted::synthgen
