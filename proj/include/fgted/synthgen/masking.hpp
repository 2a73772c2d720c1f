#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fgted/dataio/tokenize.hpp"
#include "fgted/numerics/rng.hpp"

namespace fgted::synthgen {

enum class SidePolicy { kRandomUniform, kHypOnly, kSrcOnly };

struct SynthConfig {
  std::size_t beam = 8;
  std::size_t top_k = 8;
  std::size_t max_consecutive_masks = 5;
  SidePolicy side_policy = SidePolicy::kRandomUniform;
  double filter_threshold = 0.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct MaskSpan {
  std::size_t start = 0;
  std::size_t length = 0;
  bool operator==(const MaskSpan&) const = default;
};

// Words with one contiguous run of "[MASK]" placeholders.
struct MaskedSentence {
  std::vector<std::string> tokens;
  std::vector<MaskSpan> inserted_spans;

  std::vector<std::size_t> mask_positions() const;
  // The sentence with every inserted span removed.
  std::vector<std::string> without_spans() const;
};

// One run of uniform length in [1, max_consecutive_masks] at a uniformly
// chosen gap among the |words| + 1 gaps.
MaskedSentence insert_masks(std::span<const std::string> words, Rng& rng,
                            const SynthConfig& config);

bool is_mask(const std::string& word);

}  // namespace fgted::synthgen
