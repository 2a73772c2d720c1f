#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fgted/dataio/annotation.hpp"
#include "fgted/model/checkpoint.hpp"
#include "fgted/model/encoder.hpp"

namespace fgted::cli {

// Reads pairs from either annotation records or synthetic examples (detected
// per file from the first record). Synthetic examples become single-span
// annotation records.
std::vector<dataio::AnnotatedExample> read_any_examples(const std::filesystem::path& path);

std::vector<dataio::ExamplePredictions> predict_examples(
    const model::Checkpoint& checkpoint, std::span<const dataio::AnnotatedExample> examples,
    double threshold = dataio::kDefaultDecisionThreshold,
    model::AttentionMode mode = model::AttentionMode::kFull);

// (good, incorrect) segment-score pairs. Every example carrying an addition
// span yields one pair whose good side drops the added HYP words.
std::vector<std::pair<double, double>> ced_score_pairs(
    const model::Checkpoint& checkpoint, std::span<const dataio::AnnotatedExample> examples);

}  // namespace fgted::cli
