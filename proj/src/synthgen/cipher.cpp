#include "fgted/synthgen/cipher.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "fgted/dataio/annotation.hpp"
#include "fgted/dataio/tokenize.hpp"
#include "fgted/numerics/errors.hpp"
#include "fgted/numerics/rng.hpp"

namespace fgted::synthgen {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kSrcAlphabet = "abcdefghijklm";
constexpr std::string_view kTgtAlphabet = "nopqrstuvwxyz";
constexpr std::size_t kSuccessors = 4;

std::vector<std::string> distinct_words(std::size_t n, std::string_view alphabet, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < n) {
    // At most one subword per word, so every word is a fill candidate.
    const std::size_t len = 2 + uniform_index(rng, dataio::kSubwordWidth - 1);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

}  // namespace

CipherCorpus cipher_corpus(std::size_t n, std::size_t vocab_size, std::uint64_t seed) {
  if (vocab_size < 8) throw UsageError("cipher vocabulary needs at least 8 words");
  if (vocab_size > kMaxCipherVocab) {
    throw UsageError("cipher vocabulary is capped at " + std::to_string(kMaxCipherVocab) + " words");
  }
  Rng lex = make_stream(seed, {0xc1, 0});
  const auto src_words = distinct_words(vocab_size, kSrcAlphabet, lex);
  const auto tgt_words = distinct_words(vocab_size, kTgtAlphabet, lex);

  CipherCorpus corpus;
  for (std::size_t i = 0; i < vocab_size; ++i) corpus.alignment[src_words[i]] = tgt_words[i];

  // Sparse bigram chain: each word has a few weighted successors.
  std::vector<std::vector<std::size_t>> next(vocab_size);
  std::vector<std::vector<double>> weight(vocab_size);
  for (std::size_t w = 0; w < vocab_size; ++w) {
    for (std::size_t k = 0; k < kSuccessors; ++k) {
      next[w].push_back(uniform_index(lex, vocab_size));
      weight[w].push_back(0.1 + uniform_unit(lex));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_stream(seed, {0xc1, 1, i});
    const std::size_t len =
        kMinSentenceWords + uniform_index(rng, kMaxSentenceWords - kMinSentenceWords + 1);
    std::vector<std::size_t> ids{uniform_index(rng, vocab_size)};
    while (ids.size() < len) {
      const auto& w = weight[ids.back()];
      double total = 0.0;
      for (double x : w) total += x;
      double u = uniform_unit(rng) * total;
      std::size_t k = 0;
      while (k + 1 < w.size() && u >= w[k]) u -= w[k++];
      ids.push_back(next[ids.back()][k]);
    }
    ParallelPair pair;
    for (std::size_t id : ids) {
      pair.src.push_back(src_words[id]);
      pair.tgt.push_back(tgt_words[id]);
    }
    std::reverse(pair.tgt.begin() + static_cast<std::ptrdiff_t>(len / 2), pair.tgt.end());
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

std::vector<std::string> single_token_words(const Alignment& alignment, bool target_side) {
  std::set<std::string> out;
  for (const auto& [s, t] : alignment) {
    const std::string& w = target_side ? t : s;
    if (dataio::subword_split(w).size() == 1) out.insert(w);
  }
  return {out.begin(), out.end()};
}

double alignment_overlap(const ParallelPair& pair, const Alignment& alignment) {
  if (pair.tgt.empty()) throw DataError("empty target sentence");
  std::set<std::string> images;
  for (const auto& s : pair.src) {
    auto it = alignment.find(s);
    if (it != alignment.end()) images.insert(it->second);
  }
  std::size_t hits = 0;
  for (const auto& t : pair.tgt) hits += images.count(t);
  return static_cast<double>(hits) / static_cast<double>(pair.tgt.size());
}

PairScorer alignment_scorer(const Alignment& alignment) {
  return [&alignment](const ParallelPair& p) { return alignment_overlap(p, alignment); };
}

FilterReport filter_pairs(const std::vector<ParallelPair>& pairs, const PairScorer& scorer,
                          double threshold) {
  FilterReport report;
  report.input = pairs.size();
  for (const auto& p : pairs) {
    double score = 0.0;
    try {
      score = scorer(p);
    } catch (const std::exception&) {
      ++report.scorer_failures;
      continue;
    }
    if (!std::isfinite(score)) {
      ++report.scorer_failures;
    } else if (score >= threshold) {
      report.retained.push_back(p);
    } else {
      ++report.below_threshold;
    }
  }
  return report;
}

void write_corpus(const std::filesystem::path& path, const std::vector<ParallelPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& p : pairs) {
    json j;
    j["src"] = p.src;
    j["tgt"] = p.tgt;
    out << j.dump() << '\n';
  }
}

std::vector<ParallelPair> read_corpus(const std::filesystem::path& path) {
  std::vector<ParallelPair> pairs;
  const auto lines = dataio::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      const json j = json::parse(lines[i]);
      pairs.push_back({j.at("src").get<std::vector<std::string>>(),
                       j.at("tgt").get<std::vector<std::string>>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (pairs.back().src.empty() || pairs.back().tgt.empty()) {
      throw DataError(path.string() + " line " + std::to_string(i + 1) + ": empty sentence");
    }
  }
  return pairs;
}

void write_alignment(const std::filesystem::path& path, const Alignment& alignment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << json(alignment).dump(1) << '\n';
}

Alignment read_alignment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in).get<Alignment>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace fgted::synthgen
