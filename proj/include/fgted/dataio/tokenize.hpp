#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fgted::dataio {

inline constexpr int kClsId = 0;
inline constexpr int kSepId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kPadId = 3;
inline constexpr int kNumSpecials = 4;

inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kPadToken = "[PAD]";

inline constexpr std::size_t kSubwordWidth = 3;
inline constexpr double kDefaultDecisionThreshold = 0.5;

enum class Side { kHyp, kSrc };

std::string_view side_name(Side side);
Side side_from_name(std::string_view name);

// Fixed-width chunking into pieces of kSubwordWidth UTF-8 code points.
std::vector<std::string> subword_split(std::string_view word);

// Token inventory. Ids 0-3 are the specials; the rest are subword strings.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  // Specials followed by the sorted set of subwords of every word.
  static Vocabulary from_words(std::span<const std::vector<std::string>> sentences);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const;
  std::optional<int> find(std::string_view token) const;
  // Throws DataError for unknown tokens.
  int id(std::string_view token) const;
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  // Ids of the subwords of one word.
  std::vector<int> encode_word(std::string_view word) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct SubwordPrediction {
  double prob_error = 0.0;
  int label = 0;
};

// Invariant: label == 1 iff prob_error >= the decision threshold in force.
struct WordPrediction {
  Side side = Side::kHyp;
  std::size_t index = 0;
  double prob_error = 0.0;
  int label = 0;
};

// Word-level predictions from subword predictions. word_ids holds, per
// subword, the global word index (HYP words first, then SRC words) or -1 for
// specials, which are ignored. A word is an error if any of its subwords is;
// its probability is the maximum over its subwords.
std::vector<WordPrediction> propagate_to_words(
    std::span<const SubwordPrediction> subwords, std::span<const int> word_ids,
    std::size_t hyp_word_count);

}  // namespace fgted::dataio
