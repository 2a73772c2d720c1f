#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fgted/numerics/tensor.hpp"

namespace fgted::model {

using numerics::Shape;
using numerics::Tensor;

struct EncoderConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 128;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 32;
  // Output widths of the token classifier's linear layers. The default keeps
  // the 3x / 1x / 2 proportions of a large-backbone head at d_model = 64.
  std::vector<std::size_t> classifier_hidden = {192, 64, 2};
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;

  // Throws ConfigError when an invariant does not hold.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered parameter names and shapes implied by a config.
std::vector<std::pair<std::string, Shape>> parameter_layout(const EncoderConfig& config);

// Weights of the encoder, the token classifier and the masked-LM head.
// Tensors are tracked leaves. Copying is disabled because tensors are shared
// handles; use clone() for an independent copy.
class EncoderParams {
 public:
  EncoderParams(EncoderConfig config, std::vector<NamedTensor> tensors);
  EncoderParams(EncoderParams&&) = default;
  EncoderParams& operator=(EncoderParams&&) = default;
  EncoderParams(const EncoderParams&) = delete;
  EncoderParams& operator=(const EncoderParams&) = delete;

  const EncoderConfig& config() const { return config_; }
  const Tensor& at(std::string_view name) const;
  std::span<const NamedTensor> tensors() const { return tensors_; }
  std::span<NamedTensor> tensors() { return tensors_; }

  EncoderParams clone() const;
  void zero_grad();
  std::size_t parameter_count() const;

  // Bitwise equality of every value.
  bool same_values(const EncoderParams& other) const;

 private:
  EncoderConfig config_;
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Weights ~ N(0, 0.02^2), biases zero, layer-norm gains one. Identical seeds
// give bitwise-identical parameters.
EncoderParams init_params(const EncoderConfig& config);

bool is_classifier_parameter(std::string_view name);

}  // namespace fgted::model
