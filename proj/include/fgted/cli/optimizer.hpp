#pragma once

#include <cstddef>
#include <vector>

#include "fgted/model/config.hpp"

namespace fgted::cli {

// Adam with separate learning rates for the encoder (everything outside the
// classifier head) and the classifier, both multiplied by lr_scale.
struct AdamConfig {
  double encoder_lr = 1e-5;
  double classifier_lr = 1e-4;
  double lr_scale = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global L2 gradient-norm cap; 0 disables.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(const model::EncoderParams& params, AdamConfig config);

  // Applies the accumulated gradients and clears them. Parameters without a
  // gradient are left untouched (their moments still decay).
  void step(model::EncoderParams& params);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<bool> classifier_;
  std::size_t t_ = 0;
};

}  // namespace fgted::cli
