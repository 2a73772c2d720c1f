#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fgted::dataio {

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

// Partitions items into train/dev/test so that items with the same group key
// (the exact SRC sentence) always share a subset. Whole groups are assigned
// in seeded-shuffle order to the subset with the largest remaining deficit
// against its ratio target, so each subset size is within the largest group
// size of its target. Indices inside each subset keep input order.
SplitIndices grouped_split(std::span<const std::string> group_keys,
                           std::array<double, 3> ratios, std::uint64_t seed);

// Group key for a word sequence.
std::string sentence_key(std::span<const std::string> words);

}  // namespace fgted::dataio
