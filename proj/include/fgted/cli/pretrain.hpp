#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fgted/dataio/tokenize.hpp"
#include "fgted/model/config.hpp"
#include "fgted/synthgen/cipher.hpp"

namespace fgted::cli {

struct Objectives {
  bool mlm = false;
  bool tlm = false;
  bool xlco = false;
  bool operator==(const Objectives&) const = default;
};

// "mlm", "tlm", "mlm+tlm" or "mlm+tlm+xlco". Throws UsageError.
Objectives parse_objectives(std::string_view spec);
std::string objectives_name(const Objectives& o);

struct PretrainConfig {
  Objectives objectives{true, false, false};
  std::size_t steps = 3000;
  std::size_t batch = 16;
  double lr = 1e-3;
  double temperature = 0.1;  // xlco
  std::uint64_t seed = 0;

  void validate() const;
};

// Vocabulary over every word of both languages.
dataio::Vocabulary corpus_vocabulary(std::span<const synthgen::ParallelPair> corpus);

// MLM masks target sentences in the HYP single layout and source sentences in
// the SRC single layout; TLM masks the pair layout with Full attention; XLCO
// contrasts mean-pooled single-sentence embeddings of each pair. The step
// loss is the sum of the enabled objectives. Optional per-step loss log.
model::EncoderParams pretrain(model::EncoderParams params, const dataio::Vocabulary& vocab,
                              std::span<const synthgen::ParallelPair> corpus,
                              const PretrainConfig& config, std::vector<double>* loss_log = nullptr);

}  // namespace fgted::cli
