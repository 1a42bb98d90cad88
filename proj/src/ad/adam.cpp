#include "celeganser/ad/adam.hpp"

#include <cmath>

#include "celeganser/error.hpp"

namespace celeganser::ad {

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const Tensor<T>& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          ErrorCode::kShapeMismatch, "Adam state does not match the parameter list");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = params[k];
    std::vector<double>& m = state.m[k];
    std::vector<double>& v = state.v[k];
    require(m.size() == p.numel() && v.size() == p.numel(), ErrorCode::kShapeMismatch,
            "Adam moment buffer size differs from its parameter");
    if (!p.requires_grad()) continue;
    auto value = p.mutable_data();
    const auto grad = p.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] = static_cast<T>(value[i] - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

double lr_schedule(int epoch, double lr0, int halve_every) {
  require(epoch >= 0 && halve_every > 0, ErrorCode::kInvalidArgument,
          "lr_schedule needs epoch >= 0 and a positive halving period");
  return lr0 * std::pow(0.5, epoch / halve_every);
}

template void adam_step<float>(std::vector<Tensor<float>>&, AdamState&);
template void adam_step<double>(std::vector<Tensor<double>>&, AdamState&);

}  // namespace celeganser::ad
