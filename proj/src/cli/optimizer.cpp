#include "fgted/cli/optimizer.hpp"

#include <cmath>

#include "fgted/numerics/errors.hpp"

namespace fgted::cli {

Adam::Adam(const model::EncoderParams& params, AdamConfig config) : config_(config) {
  if (!(config.lr_scale > 0.0) || config.encoder_lr < 0.0 || config.classifier_lr < 0.0) {
    throw ConfigError("learning rates must be non-negative and lr_scale positive");
  }
  for (const auto& nt : params.tensors()) {
    m_.emplace_back(nt.tensor.size(), 0.0);
    v_.emplace_back(nt.tensor.size(), 0.0);
    classifier_.push_back(model::is_classifier_parameter(nt.name));
  }
}

void Adam::step(model::EncoderParams& params) {
  auto tensors = params.tensors();
  if (tensors.size() != m_.size()) throw UsageError("optimizer built for a different model");
  ++t_;
  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& nt : tensors) {
      if (!nt.tensor.has_grad()) continue;
      for (double g : nt.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    numerics::Tensor& t = tensors[k].tensor;
    const double lr =
        config_.lr_scale * (classifier_[k] ? config_.classifier_lr : config_.encoder_lr);
    auto& m = m_[k];
    auto& v = v_[k];
    if (!t.has_grad()) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] *= config_.beta1;
        v[i] *= config_.beta2;
      }
      continue;
    }
    const auto g = t.grad();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
    }
  }
  params.zero_grad();
}

}  // namespace fgted::cli
