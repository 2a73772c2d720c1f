#include "fgted/dataio/tokenize.hpp"

#include <algorithm>
#include <set>

#include "fgted/numerics/errors.hpp"

namespace fgted::dataio {

std::string_view side_name(Side side) { return side == Side::kHyp ? "hyp" : "src"; }

Side side_from_name(std::string_view name) {
  if (name == "hyp") return Side::kHyp;
  if (name == "src") return Side::kSrc;
  throw DataError("side must be \"hyp\" or \"src\", got \"" + std::string(name) + "\"");
}

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xe) return 3;
  if ((lead >> 3) == 0x1e) return 4;
  throw DataError("invalid UTF-8 lead byte");
}

}  // namespace

std::vector<std::string> subword_split(std::string_view word) {
  if (word.empty()) throw DataError("cannot split an empty word");
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < word.size()) {
    std::size_t end = pos;
    for (std::size_t cp = 0; cp < kSubwordWidth && end < word.size(); ++cp) {
      end += utf8_length(static_cast<unsigned char>(word[end]));
    }
    if (end > word.size()) throw DataError("truncated UTF-8 sequence");
    pieces.emplace_back(word.substr(pos, end - pos));
    pos = end;
  }
  return pieces;
}

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kClsToken), std::string(kSepToken),
                                          std::string(kMaskToken), std::string(kPadToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const std::string_view specials[] = {kClsToken, kSepToken, kMaskToken, kPadToken};
  if (tokens_.size() < static_cast<std::size_t>(kNumSpecials)) {
    throw DataError("vocabulary must start with the four special tokens");
  }
  for (int i = 0; i < kNumSpecials; ++i) {
    if (tokens_[static_cast<std::size_t>(i)] != specials[i]) {
      throw DataError("vocabulary slot " + std::to_string(i) + " must be " +
                      std::string(specials[i]));
    }
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::from_words(std::span<const std::vector<std::string>> sentences) {
  std::set<std::string> pieces;
  for (const auto& sentence : sentences) {
    for (const auto& word : sentence) {
      for (auto& p : subword_split(word)) pieces.insert(std::move(p));
    }
  }
  std::vector<std::string> tokens{std::string(kClsToken), std::string(kSepToken),
                                  std::string(kMaskToken), std::string(kPadToken)};
  for (const auto& p : pieces) {
    if (p == kClsToken || p == kSepToken || p == kMaskToken || p == kPadToken) continue;
    tokens.push_back(p);
  }
  return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const {
  if (auto found = find(token)) return *found;
  throw DataError("unknown token '" + std::string(token) + "'");
}

std::vector<int> Vocabulary::encode_word(std::string_view word) const {
  if (word == kMaskToken) return {kMaskId};
  std::vector<int> ids;
  for (const auto& piece : subword_split(word)) ids.push_back(id(piece));
  return ids;
}

std::vector<WordPrediction> propagate_to_words(std::span<const SubwordPrediction> subwords,
                                               std::span<const int> word_ids,
                                               std::size_t hyp_word_count) {
  if (subwords.size() != word_ids.size()) {
    throw DataError("subword prediction count does not match word id count");
  }
  int max_word = -1;
  for (int w : word_ids) max_word = std::max(max_word, w);
  const std::size_t n_words = static_cast<std::size_t>(max_word + 1);
  std::vector<WordPrediction> words(n_words);
  std::vector<bool> seen(n_words, false);
  for (std::size_t i = 0; i < subwords.size(); ++i) {
    const int w = word_ids[i];
    if (w < 0) continue;
    auto& wp = words[static_cast<std::size_t>(w)];
    if (!seen[static_cast<std::size_t>(w)]) {
      seen[static_cast<std::size_t>(w)] = true;
      wp.prob_error = subwords[i].prob_error;
      wp.label = subwords[i].label;
    } else {
      wp.prob_error = std::max(wp.prob_error, subwords[i].prob_error);
      wp.label = wp.label | subwords[i].label;
    }
  }
  for (std::size_t w = 0; w < n_words; ++w) {
    if (!seen[w]) throw DataError("word " + std::to_string(w) + " has no subwords");
    words[w].side = w < hyp_word_count ? Side::kHyp : Side::kSrc;
    words[w].index = w < hyp_word_count ? w : w - hyp_word_count;
  }
  return words;
}

}  // namespace fgted::dataio
