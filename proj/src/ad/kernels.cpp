#include "celeganser/ad/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

namespace celeganser::ad::kernels {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvDims& d) { return d.kernel == 1 && d.stride == 1 && d.pad == 0; }

// Output columns [lo, hi) whose source column ox * stride - pad + kx is inside
// the input row.
struct ValidSpan {
  int lo, hi;
};

ValidSpan valid_columns(const ConvDims& d, int kx, int wo) {
  const int off = kx - d.pad;
  int lo = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  int hi = (d.width - 1 - off) >= 0 ? (d.width - 1 - off) / d.stride + 1 : 0;
  lo = std::min(lo, wo);
  hi = std::clamp(hi, lo, wo);
  return {lo, hi};
}

// cols[(ci * K + ky) * K + kx][oy * Wo + ox]
template <typename T>
void im2col(const ConvDims& d, const T* in, T* cols) {
  const int ho = d.out_height();
  const int wo = d.out_width();
  const int k = d.kernel;
  for (int ci = 0; ci < d.in_channels; ++ci) {
    const T* plane = in + static_cast<std::size_t>(ci) * d.height * d.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ho * wo;
        const ValidSpan span = valid_columns(d, kx, wo);
        const int off = kx - d.pad;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= d.height) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * d.width + off;
          std::fill(dst, dst + span.lo, T(0));
          if (d.stride == 1) {
            std::copy(src + span.lo, src + span.hi, dst + span.lo);
          } else {
            for (int ox = span.lo; ox < span.hi; ++ox) dst[ox] = src[ox * d.stride];
          }
          std::fill(dst + span.hi, dst + wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvDims& d, const T* cols, T* in) {
  const int ho = d.out_height();
  const int wo = d.out_width();
  const int k = d.kernel;
  for (int ci = 0; ci < d.in_channels; ++ci) {
    T* plane = in + static_cast<std::size_t>(ci) * d.height * d.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(ci * k + ky) * k + kx) * ho * wo;
        const ValidSpan span = valid_columns(d, kx, wo);
        const int off = kx - d.pad;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.height) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = plane + static_cast<std::size_t>(iy) * d.width + off;
          if (d.stride == 1) {
            for (int ox = span.lo; ox < span.hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = span.lo; ox < span.hi; ++ox) dst[ox * d.stride] += src[ox];
          }
        }
      }
    }
  }
}

struct AxisTap {
  int i0, i1;
  double f;
};

std::vector<AxisTap> upsample_taps(int in) {
  std::vector<AxisTap> taps(2 * static_cast<std::size_t>(in));
  for (int o = 0; o < 2 * in; ++o) {
    const double src = std::clamp((o + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    taps[o] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

// Separable: rows are interpolated horizontally into `tmp` (h x 2w), then
// blended vertically.
template <typename T>
void upsample_plane(int h, int w, const std::vector<AxisTap>& ty, const std::vector<AxisTap>& tx,
                    const T* in, T* out, std::vector<T>& tmp) {
  const int wo = 2 * w;
  tmp.resize(static_cast<std::size_t>(h) * wo);
  for (int y = 0; y < h; ++y) {
    const T* src = in + static_cast<std::size_t>(y) * w;
    T* dst = tmp.data() + static_cast<std::size_t>(y) * wo;
    for (int ox = 0; ox < wo; ++ox) {
      const AxisTap& b = tx[ox];
      const T fx = static_cast<T>(b.f);
      dst[ox] = src[b.i0] * (T(1) - fx) + src[b.i1] * fx;
    }
  }
  for (int oy = 0; oy < 2 * h; ++oy) {
    const AxisTap& a = ty[oy];
    const T fy = static_cast<T>(a.f);
    const T* top = tmp.data() + static_cast<std::size_t>(a.i0) * wo;
    const T* bot = tmp.data() + static_cast<std::size_t>(a.i1) * wo;
    T* dst = out + static_cast<std::size_t>(oy) * wo;
    for (int ox = 0; ox < wo; ++ox) dst[ox] = top[ox] * (T(1) - fy) + bot[ox] * fy;
  }
}

template <typename T>
void upsample_plane_backward(int h, int w, const std::vector<AxisTap>& ty,
                             const std::vector<AxisTap>& tx, const T* gout, T* gin,
                             std::vector<T>& tmp) {
  const int wo = 2 * w;
  tmp.assign(static_cast<std::size_t>(h) * wo, T(0));
  for (int oy = 0; oy < 2 * h; ++oy) {
    const AxisTap& a = ty[oy];
    const T fy = static_cast<T>(a.f);
    const T* g = gout + static_cast<std::size_t>(oy) * wo;
    T* top = tmp.data() + static_cast<std::size_t>(a.i0) * wo;
    T* bot = tmp.data() + static_cast<std::size_t>(a.i1) * wo;
    for (int ox = 0; ox < wo; ++ox) {
      top[ox] += g[ox] * (T(1) - fy);
      bot[ox] += g[ox] * fy;
    }
  }
  for (int y = 0; y < h; ++y) {
    const T* src = tmp.data() + static_cast<std::size_t>(y) * wo;
    T* dst = gin + static_cast<std::size_t>(y) * w;
    for (int ox = 0; ox < wo; ++ox) {
      const AxisTap& b = tx[ox];
      const T fx = static_cast<T>(b.f);
      dst[b.i0] += src[ox] * (T(1) - fx);
      dst[b.i1] += src[ox] * fx;
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward_reference(const ConvDims& d, std::span<const T> input,
                              std::span<const T> weight, std::span<const T> bias,
                              std::span<T> out) {
  const int ho = d.out_height();
  const int wo = d.out_width();
  const int k = d.kernel;
  for (int n = 0; n < d.batch; ++n) {
    for (int co = 0; co < d.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (int ci = 0; ci < d.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * d.stride - d.pad + ky;
              if (iy < 0 || iy >= d.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * d.stride - d.pad + kx;
                if (ix < 0 || ix >= d.width) continue;
                acc += weight[((co * d.in_channels + ci) * k + ky) * k + kx] *
                       input[((static_cast<std::size_t>(n) * d.in_channels + ci) * d.height + iy) *
                                 d.width +
                             ix];
              }
            }
          }
          out[((static_cast<std::size_t>(n) * d.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_reference(const ConvDims& d, std::span<const T> input,
                               std::span<const T> weight, std::span<const T> grad_out,
                               std::span<T> grad_input, std::span<T> grad_weight,
                               std::span<T> grad_bias) {
  const int ho = d.out_height();
  const int wo = d.out_width();
  const int k = d.kernel;
  for (int n = 0; n < d.batch; ++n) {
    for (int co = 0; co < d.out_channels; ++co) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const T g =
              grad_out[((static_cast<std::size_t>(n) * d.out_channels + co) * ho + oy) * wo + ox];
          if (!grad_bias.empty()) grad_bias[co] += g;
          for (int ci = 0; ci < d.in_channels; ++ci) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * d.stride - d.pad + ky;
              if (iy < 0 || iy >= d.height) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * d.stride - d.pad + kx;
                if (ix < 0 || ix >= d.width) continue;
                const std::size_t wi = ((co * d.in_channels + ci) * k + ky) * k + kx;
                const std::size_t xi =
                    ((static_cast<std::size_t>(n) * d.in_channels + ci) * d.height + iy) * d.width +
                    ix;
                if (!grad_weight.empty()) grad_weight[wi] += g * input[xi];
                if (!grad_input.empty()) grad_input[xi] += g * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const ConvDims& d, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const int ho = d.out_height();
  const int wo = d.out_width();
  const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
  const std::size_t patch = static_cast<std::size_t>(d.in_channels) * d.kernel * d.kernel;
  const std::size_t in_item = static_cast<std::size_t>(d.in_channels) * d.height * d.width;
  const std::size_t out_item = static_cast<std::size_t>(d.out_channels) * hw_out;
  const ConstMapMat<T> w(weight.data(), d.out_channels, static_cast<Eigen::Index>(patch));
  const bool pointwise = is_pointwise(d);

#pragma omp parallel
  {
    std::vector<T> cols(pointwise ? 0 : patch * hw_out);
#pragma omp for schedule(static)
    for (int n = 0; n < d.batch; ++n) {
      const T* x = input.data() + n * in_item;
      if (!pointwise) im2col(d, x, cols.data());
      const T* c = pointwise ? x : cols.data();
      MapMat<T> y(out.data() + n * out_item, d.out_channels, static_cast<Eigen::Index>(hw_out));
      y.noalias() = w * ConstMapMat<T>(c, static_cast<Eigen::Index>(patch),
                                       static_cast<Eigen::Index>(hw_out));
      if (!bias.empty()) {
        for (int co = 0; co < d.out_channels; ++co) y.row(co).array() += bias[co];
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvDims& d, std::span<const T> input, std::span<const T> weight,
                     std::span<const T> grad_out, std::span<T> grad_input,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  const int ho = d.out_height();
  const int wo = d.out_width();
  const std::size_t hw_out = static_cast<std::size_t>(ho) * wo;
  const std::size_t patch = static_cast<std::size_t>(d.in_channels) * d.kernel * d.kernel;
  const std::size_t in_item = static_cast<std::size_t>(d.in_channels) * d.height * d.width;
  const std::size_t out_item = static_cast<std::size_t>(d.out_channels) * hw_out;
  const std::size_t w_size = static_cast<std::size_t>(d.out_channels) * patch;
  const ConstMapMat<T> w(weight.data(), d.out_channels, static_cast<Eigen::Index>(patch));
  const bool pointwise = is_pointwise(d);
  const bool want_w = !grad_weight.empty();
  const bool want_b = !grad_bias.empty();
  const bool want_x = !grad_input.empty();

  // Per-item weight/bias gradients, reduced in item order afterwards.
  std::vector<T> item_gw(want_w ? w_size * d.batch : 0);
  std::vector<T> item_gb(want_b ? static_cast<std::size_t>(d.out_channels) * d.batch : 0);

#pragma omp parallel
  {
    std::vector<T> cols(pointwise ? 0 : patch * hw_out);
    std::vector<T> dcols(pointwise || !want_x ? 0 : patch * hw_out);
#pragma omp for schedule(static)
    for (int n = 0; n < d.batch; ++n) {
      const T* x = input.data() + n * in_item;
      const ConstMapMat<T> g(grad_out.data() + n * out_item, d.out_channels,
                             static_cast<Eigen::Index>(hw_out));
      if (want_w) {
        if (!pointwise) im2col(d, x, cols.data());
        const T* c = pointwise ? x : cols.data();
        MapMat<T> gw(item_gw.data() + n * w_size, d.out_channels,
                     static_cast<Eigen::Index>(patch));
        gw.noalias() = g * ConstMapMat<T>(c, static_cast<Eigen::Index>(patch),
                                          static_cast<Eigen::Index>(hw_out))
                               .transpose();
      }
      if (want_b) {
        for (int co = 0; co < d.out_channels; ++co)
          item_gb[static_cast<std::size_t>(n) * d.out_channels + co] = g.row(co).sum();
      }
      if (want_x) {
        T* gx = grad_input.data() + n * in_item;
        if (pointwise) {
          MapMat<T> gxm(gx, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(hw_out));
          gxm.noalias() += w.transpose() * g;
        } else {
          MapMat<T> dc(dcols.data(), static_cast<Eigen::Index>(patch),
                       static_cast<Eigen::Index>(hw_out));
          dc.noalias() = w.transpose() * g;
          col2im_add(d, dcols.data(), gx);
        }
      }
    }
  }
  for (int n = 0; n < d.batch; ++n) {
    if (want_w)
      for (std::size_t i = 0; i < w_size; ++i) grad_weight[i] += item_gw[n * w_size + i];
    if (want_b)
      for (int co = 0; co < d.out_channels; ++co)
        grad_bias[co] += item_gb[static_cast<std::size_t>(n) * d.out_channels + co];
  }
}

template <typename T>
void upsample2x_forward_reference(int planes, int height, int width, std::span<const T> in,
                                  std::span<T> out) {
  const auto ty = upsample_taps(height);
  const auto tx = upsample_taps(width);
  const std::size_t in_plane = static_cast<std::size_t>(height) * width;
  std::vector<T> tmp;
  for (int p = 0; p < planes; ++p)
    upsample_plane(height, width, ty, tx, in.data() + p * in_plane, out.data() + 4 * p * in_plane,
                   tmp);
}

template <typename T>
void upsample2x_backward_reference(int planes, int height, int width,
                                   std::span<const T> grad_out, std::span<T> grad_in) {
  const auto ty = upsample_taps(height);
  const auto tx = upsample_taps(width);
  const std::size_t in_plane = static_cast<std::size_t>(height) * width;
  std::vector<T> tmp;
  for (int p = 0; p < planes; ++p)
    upsample_plane_backward(height, width, ty, tx, grad_out.data() + 4 * p * in_plane,
                            grad_in.data() + p * in_plane, tmp);
}

template <typename T>
void upsample2x_forward(int planes, int height, int width, std::span<const T> in,
                        std::span<T> out) {
  const auto ty = upsample_taps(height);
  const auto tx = upsample_taps(width);
  const std::size_t in_plane = static_cast<std::size_t>(height) * width;
#pragma omp parallel
  {
    std::vector<T> tmp;
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p)
      upsample_plane(height, width, ty, tx, in.data() + p * in_plane,
                     out.data() + 4 * p * in_plane, tmp);
  }
}

template <typename T>
void upsample2x_backward(int planes, int height, int width, std::span<const T> grad_out,
                         std::span<T> grad_in) {
  const auto ty = upsample_taps(height);
  const auto tx = upsample_taps(width);
  const std::size_t in_plane = static_cast<std::size_t>(height) * width;
#pragma omp parallel
  {
    std::vector<T> tmp;
#pragma omp for schedule(static)
    for (int p = 0; p < planes; ++p)
      upsample_plane_backward(height, width, ty, tx, grad_out.data() + 4 * p * in_plane,
                              grad_in.data() + p * in_plane, tmp);
  }
}

#define CELEGANSER_INSTANTIATE_KERNELS(T)                                                      \
  template void conv2d_forward_reference<T>(const ConvDims&, std::span<const T>,              \
                                            std::span<const T>, std::span<const T>,           \
                                            std::span<T>);                                     \
  template void conv2d_backward_reference<T>(const ConvDims&, std::span<const T>,             \
                                             std::span<const T>, std::span<const T>,          \
                                             std::span<T>, std::span<T>, std::span<T>);        \
  template void conv2d_forward<T>(const ConvDims&, std::span<const T>, std::span<const T>,    \
                                  std::span<const T>, std::span<T>);                           \
  template void conv2d_backward<T>(const ConvDims&, std::span<const T>, std::span<const T>,   \
                                   std::span<const T>, std::span<T>, std::span<T>,             \
                                   std::span<T>);                                              \
  template void upsample2x_forward_reference<T>(int, int, int, std::span<const T>,             \
                                                std::span<T>);                                 \
  template void upsample2x_backward_reference<T>(int, int, int, std::span<const T>,            \
                                                 std::span<T>);                                \
  template void upsample2x_forward<T>(int, int, int, std::span<const T>, std::span<T>);        \
  template void upsample2x_backward<T>(int, int, int, std::span<const T>, std::span<T>);

CELEGANSER_INSTANTIATE_KERNELS(float)
CELEGANSER_INSTANTIATE_KERNELS(double)

}  // namespace celeganser::ad::kernels
