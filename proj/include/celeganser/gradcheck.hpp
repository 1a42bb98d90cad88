#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "celeganser/ad/tensor.hpp"

namespace celeganser::gradcheck {

struct Options {
  double h = 1e-3;
  double tolerance = 1e-3;
  /// err = |a - n| / max(|a|, |n|, denominator_floor); with the defaults an
  /// absolute error of 1e-6 always passes.
  double denominator_floor = 1e-3;
  std::size_t max_entries_per_tensor = 64;  // sampled without replacement
  std::uint64_t seed = 0;
};

struct Result {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences of `loss` against reverse mode for (a sample of) every
/// entry of every input. `loss` must rebuild its graph from the current input
/// values on each call.
Result check(const std::string& name, std::vector<ad::Tensor<double>> inputs,
             const std::function<ad::Tensor<double>()>& loss, const Options& opt);

/// Every differentiable op, the losses, and whole networks in 64-bit.
std::vector<Result> standard_suite(std::uint64_t seed);

}  // namespace celeganser::gradcheck
