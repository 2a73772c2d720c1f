#include "fgted/model/config.hpp"

#include <cstring>

#include "fgted/numerics/errors.hpp"
#include "fgted/numerics/rng.hpp"

namespace fgted::model {

void EncoderConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("encoder config: " + what); };
  if (n_layers == 0) fail("n_layers must be positive");
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    fail("d_model must be a positive multiple of n_heads");
  }
  if (d_ff == 0) fail("d_ff must be positive");
  if (vocab_size <= 4) fail("vocab_size must exceed the 4 special tokens");
  if (max_positions < 3) fail("max_positions must allow a word plus 2 specials");
  if (classifier_hidden.empty() || classifier_hidden.back() != 2) {
    fail("classifier_hidden must end in 2");
  }
  for (std::size_t w : classifier_hidden) {
    if (w == 0) fail("classifier widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const EncoderConfig& c) {
  std::vector<std::pair<std::string, Shape>> layout;
  const std::size_t d = c.d_model;
  layout.push_back({"embed.token", {c.vocab_size, d}});
  // Rows [0, P) hold HYP-block positions, rows [P, 2P) SRC-block positions.
  layout.push_back({"embed.position", {2 * c.max_positions, d}});
  layout.push_back({"embed.ln.gain", {d}});
  layout.push_back({"embed.ln.bias", {d}});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* m : {"q", "k", "v", "o"}) {
      layout.push_back({p + "attn.w" + m, {d, d}});
      layout.push_back({p + "attn.b" + m, {d}});
    }
    layout.push_back({p + "ln1.gain", {d}});
    layout.push_back({p + "ln1.bias", {d}});
    layout.push_back({p + "ff.w1", {d, c.d_ff}});
    layout.push_back({p + "ff.b1", {c.d_ff}});
    layout.push_back({p + "ff.w2", {c.d_ff, d}});
    layout.push_back({p + "ff.b2", {d}});
    layout.push_back({p + "ln2.gain", {d}});
    layout.push_back({p + "ln2.bias", {d}});
  }
  std::size_t in = d;
  for (std::size_t i = 0; i < c.classifier_hidden.size(); ++i) {
    const std::string p = "classifier." + std::to_string(i) + ".";
    layout.push_back({p + "weight", {in, c.classifier_hidden[i]}});
    layout.push_back({p + "bias", {c.classifier_hidden[i]}});
    in = c.classifier_hidden[i];
  }
  layout.push_back({"mlm.dense.weight", {d, d}});
  layout.push_back({"mlm.dense.bias", {d}});
  layout.push_back({"mlm.ln.gain", {d}});
  layout.push_back({"mlm.ln.bias", {d}});
  layout.push_back({"mlm.decoder.weight", {d, c.vocab_size}});
  layout.push_back({"mlm.decoder.bias", {c.vocab_size}});
  return layout;
}

bool is_classifier_parameter(std::string_view name) {
  return name.starts_with("classifier.");
}

EncoderParams::EncoderParams(EncoderConfig config, std::vector<NamedTensor> tensors)
    : config_(std::move(config)), tensors_(std::move(tensors)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  if (layout.size() != tensors_.size()) {
    throw ConfigError("parameter set does not match the config layout");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors_[i].name != layout[i].first || tensors_[i].tensor.shape() != layout[i].second) {
      throw ConfigError("parameter '" + tensors_[i].name + "' does not match expected '" +
                        layout[i].first + "' " + numerics::shape_to_string(layout[i].second));
    }
    index_.emplace(tensors_[i].name, i);
  }
}

const Tensor& EncoderParams::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw UsageError("no parameter named '" + std::string(name) + "'");
  return tensors_[it->second].tensor;
}

EncoderParams EncoderParams::clone() const {
  std::vector<NamedTensor> copy;
  copy.reserve(tensors_.size());
  for (const auto& nt : tensors_) {
    copy.push_back({nt.name, Tensor::parameter(nt.tensor.shape(),
                                               {nt.tensor.values().begin(), nt.tensor.values().end()})});
  }
  return EncoderParams(config_, std::move(copy));
}

void EncoderParams::zero_grad() {
  for (auto& nt : tensors_) nt.tensor.zero_grad();
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : tensors_) n += nt.tensor.size();
  return n;
}

bool EncoderParams::same_values(const EncoderParams& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    auto a = tensors_[i].tensor.values();
    auto b = other.tensors_[i].tensor.values();
    if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size_bytes()) != 0) return false;
  }
  return true;
}

EncoderParams init_params(const EncoderConfig& config) {
  config.validate();
  Rng rng = make_stream(config.seed, {0x1a17});
  std::vector<NamedTensor> tensors;
  for (const auto& [name, shape] : parameter_layout(config)) {
    std::vector<double> values(numerics::shape_size(shape), 0.0);
    if (name.ends_with(".gain")) {
      std::fill(values.begin(), values.end(), 1.0);
    } else if (shape.size() == 2) {
      for (double& v : values) v = 0.02 * standard_normal(rng);
    }
    tensors.push_back({name, Tensor::parameter(shape, std::move(values))});
  }
  return EncoderParams(config, std::move(tensors));
}

}  // namespace fgted::model
