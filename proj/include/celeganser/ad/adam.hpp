#pragma once

#include <cstdint>
#include <vector>

#include "celeganser/ad/tensor.hpp"

namespace celeganser::ad {

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every parameter from its current grad.
/// Moment buffers are created on the first call and must keep matching the
/// parameter list afterwards (kShapeMismatch otherwise).
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState& state);

/// lr0 * 0.5^floor(epoch / halve_every).
double lr_schedule(int epoch, double lr0 = 5e-4, int halve_every = 20);

}  // namespace celeganser::ad
