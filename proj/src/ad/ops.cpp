#include "celeganser/ad/ops.hpp"

#include <cmath>

#include "celeganser/ad/kernels.hpp"
#include "celeganser/error.hpp"

namespace celeganser::ad {

namespace {

template <typename T>
void require_rank4(const Tensor<T>& x, const char* op) {
  require(x.defined() && x.rank() == 4, ErrorCode::kShapeMismatch,
          std::string(op) + " expects an NCHW tensor");
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

template <typename T>
std::span<T> grad_of(Node<T>& n) {
  if (!n.requires_grad) return {};
  n.ensure_grad();
  return n.grad;
}

template <typename T, typename F, typename G>
Tensor<T> unary(const Tensor<T>& x, F forward, G derivative) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [derivative](Node<T>& o) {
    Node<T>& p = *o.parents[0];
    auto g = grad_of(p);
    if (g.empty()) return;
    T* __restrict gp = g.data();
    const T* __restrict go = o.grad.data();
    const T* __restrict in = p.value.data();
    const T* __restrict out = o.value.data();
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) gp[i] += go[i] * derivative(in[i], out[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int pad) {
  require_rank4(input, "conv2d");
  require(weight.defined() && weight.rank() == 4, ErrorCode::kShapeMismatch,
          "conv2d weight must be [Cout, Cin, K, K]");
  require(weight.dim(2) == weight.dim(3) && weight.dim(2) % 2 == 1, ErrorCode::kShapeMismatch,
          "conv2d needs a square kernel of odd size");
  require(weight.dim(1) == input.dim(1), ErrorCode::kShapeMismatch,
          "conv2d channel mismatch: input " + shape_string(input.shape()) + ", weight " +
              shape_string(weight.shape()));
  require(!bias.defined() || (bias.rank() == 1 && bias.dim(0) == weight.dim(0)),
          ErrorCode::kShapeMismatch, "conv2d bias must be [Cout]");
  require(stride >= 1 && pad >= 0, ErrorCode::kInvalidArgument, "conv2d stride/pad");

  kernels::ConvDims d;
  d.batch = input.dim(0);
  d.in_channels = input.dim(1);
  d.height = input.dim(2);
  d.width = input.dim(3);
  d.out_channels = weight.dim(0);
  d.kernel = weight.dim(2);
  d.stride = stride;
  d.pad = pad;
  require(d.out_height() >= 1 && d.out_width() >= 1, ErrorCode::kShapeMismatch,
          "conv2d output would be empty");

  std::vector<T> out(static_cast<std::size_t>(d.batch) * d.out_channels * d.out_height() *
                     d.out_width());
  const std::span<const T> no_bias;
  kernels::conv2d_forward<T>(d, input.data(), weight.data(), bias.defined() ? bias.data() : no_bias,
                             out);
  const bool has_bias = bias.defined();
  return Tensor<T>::make_result(
      {d.batch, d.out_channels, d.out_height(), d.out_width()}, std::move(out),
      {input, weight, bias}, [d, has_bias](Node<T>& o) {
        Node<T>& x = *o.parents[0];
        Node<T>& w = *o.parents[1];
        std::span<T> gb;
        if (has_bias) gb = grad_of(*o.parents[2]);
        kernels::conv2d_backward<T>(d, x.value, w.value, o.grad, grad_of(x), grad_of(w), gb);
      });
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, bool training, double momentum, double eps) {
  require_rank4(input, "batchnorm2d");
  const int n = input.dim(0);
  const int c = input.dim(1);
  const std::size_t hw = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  require(gamma.numel() == static_cast<std::size_t>(c) &&
              beta.numel() == static_cast<std::size_t>(c) &&
              state.running_mean.numel() == static_cast<std::size_t>(c) &&
              state.running_var.numel() == static_cast<std::size_t>(c),
          ErrorCode::kShapeMismatch, "batchnorm2d parameter size != channels");
  require(!training || n >= 1, ErrorCode::kInvalidArgument, "batchnorm2d needs a batch");

  const auto x = input.data();
  const std::size_t count = static_cast<std::size_t>(n) * hw;
  std::vector<T> mu(c), inv_std(c);
  auto rm = state.running_mean.mutable_data();
  auto rv = state.running_var.mutable_data();
  for (int ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / count;
      double ss = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = x.data() + (static_cast<std::size_t>(b) * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = ss / count;
      mu[ch] = static_cast<T>(m);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * m);
      rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
    } else {
      mu[ch] = rm[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + eps));
    }
  }

  std::vector<T> out(input.numel());
  std::vector<T> xhat(input.numel());
  const auto g = gamma.data();
  const auto bt = beta.data();
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (x[off + i] - mu[ch]) * inv_std[ch];
        xhat[off + i] = xh;
        out[off + i] = g[ch] * xh + bt[ch];
      }
    }
  }

  return Tensor<T>::make_result(
      input.shape(), std::move(out), {input, gamma, beta},
      [n, c, hw, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& o) {
        Node<T>& xin = *o.parents[0];
        Node<T>& gam = *o.parents[1];
        auto gx = grad_of(xin);
        auto gg = grad_of(gam);
        auto gbeta = grad_of(*o.parents[2]);
        const double count = static_cast<double>(n) * hw;
        for (int ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += o.grad[off + i];
              sum_dy_xhat += o.grad[off + i] * xhat[off + i];
            }
          }
          if (!gg.empty()) gg[ch] += static_cast<T>(sum_dy_xhat);
          if (!gbeta.empty()) gbeta[ch] += static_cast<T>(sum_dy);
          if (gx.empty()) continue;
          const T k = gam.value[ch] * inv_std[ch];
          const T mean_dy = static_cast<T>(sum_dy / count);
          const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
          for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (training) {
                gx[off + i] += k * (o.grad[off + i] - mean_dy - xhat[off + i] * mean_dy_xhat);
              } else {
                gx[off + i] += k * o.grad[off + i];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T out) { return out * (T(1) - out); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); },
      [](T in, T) { return in > T(0) ? T(1) : (in < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    for (int k = 0; k < 2; ++k) {
      auto g = grad_of(*o.parents[k]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    auto ga = grad_of(*o.parents[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
    auto gb = grad_of(*o.parents[1]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= o.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](Node<T>& o) {
    Node<T>& pa = *o.parents[0];
    Node<T>& pb = *o.parents[1];
    auto ga = grad_of(pa);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * pb.value[i];
    auto gb = grad_of(pb);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += o.grad[i] * pa.value[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return Tensor<T>::make_result({}, {acc}, {x}, [](Node<T>& o) {
    auto g = grad_of(*o.parents[0]);
    for (T& v : g) v += o.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  require(x.numel() > 0, ErrorCode::kShapeMismatch, "mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          ErrorCode::kShapeMismatch,
          "concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const int n = a.dim(0);
  const std::size_t pa = static_cast<std::size_t>(a.dim(1)) * a.dim(2) * a.dim(3);
  const std::size_t pb = static_cast<std::size_t>(b.dim(1)) * b.dim(2) * b.dim(3);
  std::vector<T> out((pa + pb) * n);
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * pa, pa, out.data() + i * (pa + pb));
    std::copy_n(b.data().data() + i * pb, pb, out.data() + i * (pa + pb) + pa);
  }
  return Tensor<T>::make_result({n, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, std::move(out),
                                {a, b}, [n, pa, pb](Node<T>& o) {
                                  auto ga = grad_of(*o.parents[0]);
                                  auto gb = grad_of(*o.parents[1]);
                                  for (int i = 0; i < n; ++i) {
                                    const T* src = o.grad.data() + i * (pa + pb);
                                    if (!ga.empty())
                                      for (std::size_t k = 0; k < pa; ++k) ga[i * pa + k] += src[k];
                                    if (!gb.empty())
                                      for (std::size_t k = 0; k < pb; ++k)
                                        gb[i * pb + k] += src[pa + k];
                                  }
                                });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int begin, int end) {
  require_rank4(x, "slice_channels");
  require(begin >= 0 && begin < end && end <= x.dim(1), ErrorCode::kShapeMismatch,
          "slice_channels range out of bounds");
  const int n = x.dim(0);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const std::size_t item = plane * x.dim(1);
  const std::size_t part = plane * (end - begin);
  std::vector<T> out(part * n);
  for (int i = 0; i < n; ++i)
    std::copy_n(x.data().data() + i * item + begin * plane, part, out.data() + i * part);
  return Tensor<T>::make_result({n, end - begin, x.dim(2), x.dim(3)}, std::move(out), {x},
                                [n, plane, item, part, begin](Node<T>& o) {
                                  auto g = grad_of(*o.parents[0]);
                                  if (g.empty()) return;
                                  for (int i = 0; i < n; ++i)
                                    for (std::size_t k = 0; k < part; ++k)
                                      g[i * item + begin * plane + k] += o.grad[i * part + k];
                                });
}

template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& x) {
  require_rank4(x, "upsample_bilinear2x");
  const int planes = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  std::vector<T> out(x.numel() * 4);
  kernels::upsample2x_forward<T>(planes, h, w, x.data(), out);
  return Tensor<T>::make_result({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {x},
                                [planes, h, w](Node<T>& o) {
                                  auto g = grad_of(*o.parents[0]);
                                  if (g.empty()) return;
                                  kernels::upsample2x_backward<T>(planes, h, w, o.grad, g);
                                });
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank4(x, "global_avg_pool");
  const int planes = x.dim(0) * x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> out(planes);
  for (int p = 0; p < planes; ++p) {
    T acc = T(0);
    for (std::size_t i = 0; i < hw; ++i) acc += x.data()[p * hw + i];
    out[p] = acc / static_cast<T>(hw);
  }
  return Tensor<T>::make_result({x.dim(0), x.dim(1), 1, 1}, std::move(out), {x},
                                [planes, hw](Node<T>& o) {
                                  auto g = grad_of(*o.parents[0]);
                                  if (g.empty()) return;
                                  for (int p = 0; p < planes; ++p) {
                                    const T share = o.grad[p] / static_cast<T>(hw);
                                    for (std::size_t i = 0; i < hw; ++i) g[p * hw + i] += share;
                                  }
                                });
}

#define CELEGANSER_INSTANTIATE_OPS(T)                                                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);  \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                 BatchNormState<T>&, bool, double, double);                   \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> abs(const Tensor<T>&);                                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> slice_channels(const Tensor<T>&, int, int);                              \
  template Tensor<T> upsample_bilinear2x(const Tensor<T>&);                                   \
  template Tensor<T> global_avg_pool(const Tensor<T>&);

CELEGANSER_INSTANTIATE_OPS(float)
CELEGANSER_INSTANTIATE_OPS(double)

}  // namespace celeganser::ad
