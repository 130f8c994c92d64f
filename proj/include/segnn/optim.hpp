#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "segnn/autodiff.hpp"

namespace segnn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment buffers shaped like their parameters.
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::int64_t step = 0;
};

// Bias-corrected Adam update of every trainable parameter from its grad.
// Non-trainable parameters (buffers) are left untouched.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& options);

void zero_grad(std::span<Parameter* const> params);

}  // namespace segnn
