#include "fgted/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fgted/numerics/errors.hpp"

namespace fgted::model {

using json = nlohmann::ordered_json;

namespace {

json config_to_json(const EncoderConfig& c) {
  json j;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["classifier_hidden"] = c.classifier_hidden;
  j["dropout_rate"] = c.dropout_rate;
  j["seed"] = c.seed;
  return j;
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.classifier_hidden = j.at("classifier_hidden").get<std::vector<std::size_t>>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_checkpoint(const EncoderParams& params, const dataio::Vocabulary& vocab) {
  if (vocab.size() != params.config().vocab_size) {
    throw ConfigError("vocabulary size does not match the model config");
  }
  json manifest;
  manifest["config"] = config_to_json(params.config());
  manifest["vocab"] = vocab.tokens();
  json tensors = json::array();
  for (const auto& nt : params.tensors()) {
    tensors.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
  }
  manifest["tensors"] = std::move(tensors);

  std::string out(kCheckpointMagic);
  out += manifest.dump();
  out.push_back('\n');
  for (const auto& nt : params.tensors()) {
    for (double v : nt.tensor.values()) put_le(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    throw DataError("not a checkpoint (bad magic)");
  }
  const std::size_t nl = bytes.find('\n', kCheckpointMagic.size());
  if (nl == std::string::npos) throw DataError("checkpoint manifest is truncated");
  json manifest;
  EncoderConfig config;
  std::vector<std::string> tokens;
  try {
    manifest = json::parse(bytes.substr(kCheckpointMagic.size(), nl - kCheckpointMagic.size()));
    config = config_from_json(manifest.at("config"));
    tokens = manifest.at("vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint manifest: ") + e.what());
  }

  std::size_t offset = nl + 1;
  std::vector<NamedTensor> tensors;
  for (const auto& jt : manifest.at("tensors")) {
    const auto name = jt.at("name").get<std::string>();
    const auto shape = jt.at("shape").get<Shape>();
    const std::size_t n = numerics::shape_size(shape);
    if (bytes.size() < offset + 8 * n) throw DataError("checkpoint payload is truncated");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = get_le(bytes.data() + offset + 8 * i);
    offset += 8 * n;
    try {
      tensors.push_back({name, Tensor::parameter(shape, std::move(values))});
    } catch (const NumericError& e) {
      throw DataError("checkpoint tensor " + name + ": " + e.what());
    }
  }
  if (offset != bytes.size()) throw DataError("checkpoint has trailing bytes");
  Checkpoint ck{EncoderParams(config, std::move(tensors)), dataio::Vocabulary(std::move(tokens))};
  if (ck.vocab.size() != config.vocab_size) {
    throw DataError("checkpoint vocabulary size does not match its config");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     const dataio::Vocabulary& vocab) {
  const std::string bytes = serialize_checkpoint(params, vocab);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace fgted::model
