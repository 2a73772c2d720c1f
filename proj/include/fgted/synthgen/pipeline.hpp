#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgted/dataio/annotation.hpp"
#include "fgted/synthgen/beam_fill.hpp"
#include "fgted/synthgen/cipher.hpp"
#include "fgted/synthgen/masking.hpp"

namespace fgted::synthgen {

struct Provenance {
  dataio::Side side = dataio::Side::kHyp;
  std::size_t start = 0;
  std::size_t len = 0;
  bool operator==(const Provenance&) const = default;
};

// Addition errors live on HYP, omission errors on SRC.
struct BilingualExample {
  std::string id;
  std::vector<std::string> src;
  std::vector<std::string> hyp;
  std::vector<int> labels_src;
  std::vector<int> labels_hyp;
  Provenance provenance;

  const std::vector<std::string>& words(dataio::Side side) const {
    return side == dataio::Side::kHyp ? hyp : src;
  }
  const std::vector<int>& labels(dataio::Side side) const {
    return side == dataio::Side::kHyp ? labels_hyp : labels_src;
  }
  bool operator==(const BilingualExample&) const = default;
};

// The pair's tgt sentence plays HYP. `filled` must agree with `masked`
// outside the mask run. Throws DataError on inconsistency.
BilingualExample build_example(std::string id, const ParallelPair& pair, dataio::Side side,
                               const MaskedSentence& masked, const std::vector<std::string>& filled);

// Returns the violated invariants (empty when the example is well formed).
std::vector<std::string> check_example(const BilingualExample& example);

// The example as an annotation record with one single-annotator span.
dataio::AnnotatedExample to_annotated(const BilingualExample& example);

std::string to_json_line(const BilingualExample& example);
BilingualExample bilingual_from_json_line(std::string_view line, std::size_t line_no);
void write_bilingual(const std::filesystem::path& path, const std::vector<BilingualExample>& examples);
std::vector<BilingualExample> read_bilingual(const std::filesystem::path& path);

// Per-side fill and rerank models. Both fillers must outlive the call.
struct SynthModels {
  const Filler* hyp_filler = nullptr;
  const Filler* src_filler = nullptr;
  PerplexityFn hyp_perplexity;
  PerplexityFn src_perplexity;
};

struct SynthStats {
  std::size_t input_pairs = 0;
  std::size_t retained_pairs = 0;
  std::size_t below_threshold = 0;
  std::size_t scorer_failures = 0;
  std::size_t requested = 0;
  std::size_t generated = 0;
  std::size_t hyp_side = 0;
  std::size_t src_side = 0;
  std::vector<std::size_t> span_lengths;  // index = run length
  bool partial = false;

  nlohmann::ordered_json to_json() const;
};

struct SynthResult {
  std::vector<BilingualExample> examples;
  SynthStats stats;
};

// Example i of the retained pairs, drawn from stream (config.seed, i) only, so
// any subset can be produced in any order with identical results.
BilingualExample synthesize_one(const ParallelPair& pair, std::size_t index,
                                const SynthModels& models, const SynthConfig& config);

// filter -> per pair: side choice, mask insertion, beam fill, rerank, pick.
// Uses the first n retained pairs; fewer pairs yields partial output.
SynthResult generate_dataset(const std::vector<ParallelPair>& corpus, const PairScorer& scorer,
                             const SynthModels& models, const SynthConfig& config, std::size_t n);

}  // namespace fgted::synthgen
