#pragma once

#include "celeganser/ad/tensor.hpp"

namespace celeganser::ad {

// Differentiable ops over NCHW tensors. Shape violations throw kShapeMismatch.

/// Cross-correlation with zero padding. weight is [Cout, Cin, K, K] with odd
/// K; bias is [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int pad = 0);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_var;   // [C], unbiased
};

/// Training mode normalizes with batch statistics (biased variance) and
/// updates the running statistics; inference mode uses the running ones.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, bool training, double momentum = 0.1,
                      double eps = 1e-5);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
/// Stable for large |x|.
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Channels [begin, end).
template <typename T> Tensor<T> slice_channels(const Tensor<T>& x, int begin, int end);
/// Doubles H and W; output pixel o reads input coordinate (o + 0.5) / 2 - 0.5.
template <typename T> Tensor<T> upsample_bilinear2x(const Tensor<T>& x);
/// [N, C, H, W] -> [N, C, 1, 1].
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& x);

}  // namespace celeganser::ad
