#include "fgted/synthgen/masking.hpp"

#include "fgted/numerics/errors.hpp"

namespace fgted::synthgen {

void SynthConfig::validate() const {
  if (beam < 1) throw ConfigError("beam must be >= 1");
  if (top_k < 1 || top_k > beam) throw ConfigError("top_k must be in [1, beam]");
  if (max_consecutive_masks < 1) throw ConfigError("max_consecutive_masks must be >= 1");
}

bool is_mask(const std::string& word) { return word == dataio::kMaskToken; }

std::vector<std::size_t> MaskedSentence::mask_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_mask(tokens[i])) out.push_back(i);
  }
  return out;
}

std::vector<std::string> MaskedSentence::without_spans() const {
  std::vector<bool> drop(tokens.size(), false);
  for (const auto& s : inserted_spans) {
    for (std::size_t i = s.start; i < s.start + s.length && i < tokens.size(); ++i) drop[i] = true;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!drop[i]) out.push_back(tokens[i]);
  }
  return out;
}

MaskedSentence insert_masks(std::span<const std::string> words, Rng& rng,
                            const SynthConfig& config) {
  if (words.empty()) throw UsageError("cannot insert masks into an empty sentence");
  config.validate();
  const std::size_t gap = uniform_index(rng, words.size() + 1);
  const std::size_t run = 1 + uniform_index(rng, config.max_consecutive_masks);
  MaskedSentence out;
  out.tokens.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(gap));
  out.tokens.insert(out.tokens.end(), run, std::string(dataio::kMaskToken));
  out.tokens.insert(out.tokens.end(), words.begin() + static_cast<std::ptrdiff_t>(gap), words.end());
  out.inserted_spans.push_back({gap, run});
  return out;
}

}  // namespace fgted::synthgen
