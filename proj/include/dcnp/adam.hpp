#pragma once

#include <vector>

#include "dcnp/tensor.hpp"

namespace dcnp {

// Adam with bias correction. Moment buffers are created on first use and
// keyed by parameter order, which must stay stable across steps.
struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;

  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// Applies one update using each parameter's current gradient buffer.
// Throws numeric_error on non-finite gradients.
void adam_step(AdamState& state, const std::vector<Parameter*>& params);

}  // namespace dcnp
