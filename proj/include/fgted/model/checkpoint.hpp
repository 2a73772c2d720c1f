#pragma once

#include <filesystem>
#include <string>

#include "fgted/dataio/tokenize.hpp"
#include "fgted/model/config.hpp"

namespace fgted::model {

inline constexpr std::string_view kCheckpointMagic = "FGTED1\n";

struct Checkpoint {
  EncoderParams params;
  dataio::Vocabulary vocab;
};

// Layout: magic, one line of JSON manifest (config, vocabulary, ordered
// tensor names and shapes), then little-endian float64 payloads in manifest
// order.
std::string serialize_checkpoint(const EncoderParams& params, const dataio::Vocabulary& vocab);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const dataio::Vocabulary& vocab);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fgted::model
