#pragma once

#include <span>

namespace celeganser::ad::kernels {

/// NCHW convolution geometry (cross-correlation, zero padding, square kernel).
struct ConvDims {
  int batch = 1;
  int in_channels = 1;
  int height = 1;
  int width = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

// Each kernel comes in two flavours. The *_reference versions are plain
// serial loops kept as the correctness baseline. The unsuffixed versions use
// im2col + GEMM and parallelize across batch items with OpenMP; reductions
// over the batch are summed in item order after the parallel region, so the
// result does not depend on the thread count.

/// out[n, co, y, x] = bias[co] + sum over (ci, ky, kx). `bias` may be empty.
template <typename T>
void conv2d_forward_reference(const ConvDims& d, std::span<const T> input,
                              std::span<const T> weight, std::span<const T> bias,
                              std::span<T> out);

/// Accumulates (+=) into grad_input / grad_weight / grad_bias; any may be empty.
template <typename T>
void conv2d_backward_reference(const ConvDims& d, std::span<const T> input,
                               std::span<const T> weight, std::span<const T> grad_out,
                               std::span<T> grad_input, std::span<T> grad_weight,
                               std::span<T> grad_bias);

template <typename T>
void conv2d_forward(const ConvDims& d, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out);

template <typename T>
void conv2d_backward(const ConvDims& d, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_out, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias);

/// 2x bilinear upsampling with half-pixel centers over `planes` independent
/// height x width planes.
template <typename T>
void upsample2x_forward_reference(int planes, int height, int width, std::span<const T> in,
                                  std::span<T> out);
template <typename T>
void upsample2x_backward_reference(int planes, int height, int width,
                                   std::span<const T> grad_out, std::span<T> grad_in);
template <typename T>
void upsample2x_forward(int planes, int height, int width, std::span<const T> in,
                        std::span<T> out);
template <typename T>
void upsample2x_backward(int planes, int height, int width, std::span<const T> grad_out,
                         std::span<T> grad_in);

}  // namespace celeganser::ad::kernels
