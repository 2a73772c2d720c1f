#include "fgted/dataio/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fgted/numerics/errors.hpp"
#include "fgted/numerics/rng.hpp"

namespace fgted::dataio {

std::string sentence_key(std::span<const std::string> words) {
  std::string key;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) key.push_back('\x1f');
    key += words[i];
  }
  return key;
}

SplitIndices grouped_split(std::span<const std::string> group_keys,
                           std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) throw UsageError("split ratios must be positive");
  }
  // Groups in order of first appearance.
  std::map<std::string, std::size_t> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < group_keys.size(); ++i) {
    auto [it, inserted] = group_of.emplace(group_keys[i], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  if (groups.size() < 3) {
    throw UsageError("grouped split needs at least 3 groups, got " +
                     std::to_string(groups.size()));
  }

  // Integer targets by largest remainder.
  const double total_ratio = ratios[0] + ratios[1] + ratios[2];
  const double n = static_cast<double>(group_keys.size());
  std::array<std::size_t, 3> target{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = n * ratios[s] / total_ratio;
    target[s] = static_cast<std::size_t>(std::floor(exact));
    remainder[s] = exact - std::floor(exact);
    assigned += target[s];
  }
  while (assigned < group_keys.size()) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < 3; ++s) {
      if (remainder[s] > remainder[best]) best = s;
    }
    ++target[best];
    remainder[best] = -1.0;
    ++assigned;
  }

  std::vector<std::size_t> order(groups.size());
  for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
  Rng rng = make_stream(seed, {0x5b17});
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }

  std::array<std::size_t, 3> filled{};
  std::vector<int> subset_of(group_keys.size(), -1);
  for (std::size_t g : order) {
    std::size_t best = 0;
    auto deficit = [&](std::size_t s) {
      return static_cast<long long>(target[s]) - static_cast<long long>(filled[s]);
    };
    for (std::size_t s = 1; s < 3; ++s) {
      if (deficit(s) > deficit(best)) best = s;
    }
    filled[best] += groups[g].size();
    for (std::size_t i : groups[g]) subset_of[i] = static_cast<int>(best);
  }

  SplitIndices out;
  for (std::size_t i = 0; i < subset_of.size(); ++i) {
    switch (subset_of[i]) {
      case 0: out.train.push_back(i); break;
      case 1: out.dev.push_back(i); break;
      default: out.test.push_back(i); break;
    }
  }
  return out;
}

}  // namespace fgted::dataio
