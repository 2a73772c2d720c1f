#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgted/cli/optimizer.hpp"
#include "fgted/dataio/tokenize.hpp"
#include "fgted/losses/losses.hpp"
#include "fgted/model/config.hpp"
#include "fgted/synthgen/pipeline.hpp"

namespace fgted::cli {

enum class Baseline { kNone, kGrl, kDfl, kDflFixed };

Baseline parse_baseline(std::string_view name);
std::string_view baseline_name(Baseline b);

struct TrainConfig {
  bool slr = false;
  double alpha = 0.05;
  Baseline baseline = Baseline::kNone;
  double keep_fraction = losses::kDefaultKeepFraction;
  std::size_t steps = 3000;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
  AdamConfig adam;
  // Single-sentence branch reuses the pair branch's dropout masks.
  bool share_dropout = false;
  double dfl_gamma = losses::kDefaultDflGamma;
  double grl_lambda = losses::kDefaultGrlLambda;

  void validate() const;
};

struct StepLog {
  double loss = 0.0;
  double ce = 0.0;
  double slr = 0.0;
};

// Word labels in global word order (HYP words first, then SRC).
std::vector<int> pair_labels(const synthgen::BilingualExample& example);

// Fine-tunes the classifier and encoder on labelled pairs. Every random
// choice comes from streams keyed by (seed, step, example slot, branch), so
// runs are bitwise reproducible.
model::EncoderParams train(model::EncoderParams params, const dataio::Vocabulary& vocab,
                           std::span<const synthgen::BilingualExample> data,
                           const TrainConfig& config, std::vector<StepLog>* log = nullptr);

}  // namespace fgted::cli
