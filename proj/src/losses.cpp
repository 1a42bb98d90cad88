#include "celeganser/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "celeganser/ad/ops.hpp"
#include "celeganser/error.hpp"

namespace celeganser::losses {

using ad::Node;
using ad::Shape;

namespace {

constexpr double kProbClamp = 1e-7;

template <typename T>
std::span<T> grad_of(Node<T>& n) {
  if (!n.requires_grad) return {};
  n.ensure_grad();
  return n.grad;
}

template <typename T>
void check_scales(const std::vector<Tensor<T>>& a, const std::vector<Tensor<T>>& b,
                  const char* what) {
  require(!a.empty() && a.size() == b.size(), ErrorCode::kShapeMismatch,
          std::string(what) + ": scale count mismatch");
  for (std::size_t s = 0; s < a.size(); ++s)
    require(a[s].defined() && b[s].defined() && a[s].shape() == b[s].shape(),
            ErrorCode::kShapeMismatch,
            std::string(what) + ": shape mismatch at scale " + std::to_string(s + 1));
}

template <typename T>
Tensor<T> batch_tensor(const std::vector<ImageGrid>& grids) {
  const int h = grids.front().height(), w = grids.front().width();
  std::vector<T> data;
  data.reserve(grids.size() * static_cast<std::size_t>(h) * w);
  for (const auto& g : grids) {
    require(g.height() == h && g.width() == w, ErrorCode::kShapeMismatch,
            "batch rasters differ in size");
    for (double x : g.data()) data.push_back(static_cast<T>(x));
  }
  return Tensor<T>::from_vector({static_cast<int>(grids.size()), 1, h, w}, std::move(data));
}

}  // namespace

template <typename T>
MultiScaleTarget<T> make_multiscale_target(const std::vector<const ImageGrid*>& masks,
                                           const std::vector<const ImageGrid*>& u,
                                           const std::vector<const ImageGrid*>& v,
                                           int num_scales) {
  require(!masks.empty() && num_scales >= 1, ErrorCode::kInvalidArgument,
          "multi-scale target needs a non-empty batch and S >= 1");
  const bool with_uv = !u.empty();
  require(!with_uv || (u.size() == masks.size() && v.size() == masks.size()),
          ErrorCode::kShapeMismatch, "UV batch size differs from mask batch size");
  MultiScaleTarget<T> out;
  for (int s = 1; s <= num_scales; ++s) {
    const int f = 1 << (s - 1);
    std::vector<ImageGrid> m, uu, vv;
    for (std::size_t i = 0; i < masks.size(); ++i) {
      m.push_back(f == 1 ? *masks[i] : downsample_majority(*masks[i], f));
      if (with_uv) {
        uu.push_back(f == 1 ? *u[i] : downsample_masked_mean(*u[i], *masks[i], f));
        vv.push_back(f == 1 ? *v[i] : downsample_masked_mean(*v[i], *masks[i], f));
      }
    }
    out.mask.push_back(batch_tensor<T>(m));
    if (with_uv) {
      out.u.push_back(batch_tensor<T>(uu));
      out.v.push_back(batch_tensor<T>(vv));
    }
  }
  return out;
}

template <typename T>
Tensor<T> multiscale_bce(const std::vector<Tensor<T>>& probs,
                         const std::vector<Tensor<T>>& targets) {
  check_scales(probs, targets, "multiscale_bce");
  double total = 0.0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    auto x = probs[s].data();
    auto y = targets[s].data();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = std::clamp(static_cast<double>(x[i]), kProbClamp, 1.0 - kProbClamp);
      acc += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    total -= acc / static_cast<double>(x.size());
  }
  std::vector<Tensor<T>> targets_copy = targets;
  return Tensor<T>::make_result(
      {}, {static_cast<T>(total)}, probs, [targets_copy](Node<T>& o) {
        for (std::size_t s = 0; s < o.parents.size(); ++s) {
          Node<T>& p = *o.parents[s];
          auto g = grad_of(p);
          if (g.empty()) continue;
          auto y = targets_copy[s].data();
          const double inv = 1.0 / static_cast<double>(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = p.value[i];
            if (x < kProbClamp || x > 1.0 - kProbClamp) continue;
            g[i] += static_cast<T>(o.grad[0] * -(y[i] / x - (1.0 - y[i]) / (1.0 - x)) * inv);
          }
        }
      });
}

template <typename T>
Tensor<T> multiscale_bce_with_logits(const std::vector<Tensor<T>>& logits,
                                     const std::vector<Tensor<T>>& targets) {
  check_scales(logits, targets, "multiscale_bce_with_logits");
  double total = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    auto z = logits[s].data();
    auto y = targets[s].data();
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double zi = z[i];
      acc += std::max(zi, 0.0) - zi * y[i] + std::log1p(std::exp(-std::abs(zi)));
    }
    total += acc / static_cast<double>(z.size());
  }
  std::vector<Tensor<T>> targets_copy = targets;
  return Tensor<T>::make_result(
      {}, {static_cast<T>(total)}, logits, [targets_copy](Node<T>& o) {
        for (std::size_t s = 0; s < o.parents.size(); ++s) {
          Node<T>& p = *o.parents[s];
          auto g = grad_of(p);
          if (g.empty()) continue;
          auto y = targets_copy[s].data();
          const double inv = 1.0 / static_cast<double>(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double zi = p.value[i];
            const double sig = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi))
                                       : std::exp(zi) / (1.0 + std::exp(zi));
            g[i] += static_cast<T>(o.grad[0] * (sig - y[i]) * inv);
          }
        }
      });
}

template <typename T>
Tensor<T> masked_l1(const std::vector<Tensor<T>>& pred, const std::vector<Tensor<T>>& target,
                    const std::vector<Tensor<T>>& weights, double delta, bool normalize) {
  check_scales(pred, target, "masked_l1");
  check_scales(pred, weights, "masked_l1 weights");
  require(delta >= 0.0, ErrorCode::kInvalidArgument, "delta must be >= 0");
  double num = 0.0, mass = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    auto p = pred[s].data();
    auto g = target[s].data();
    auto m = weights[s].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      require(m[i] >= 0 && m[i] <= 1, ErrorCode::kInvalidArgument,
              "mask weights must lie in [0, 1]");
      num += m[i] * std::abs(static_cast<double>(p[i]) - g[i]);
      mass += m[i];
    }
  }
  double norm = 1.0;
  if (normalize) {
    norm = mass + delta;
    if (norm == 0.0) norm = 1.0;  // delta = 0 with an all-zero mask: numerator is 0 too
  }
  std::vector<Tensor<T>> tgt = target, w = weights;
  return Tensor<T>::make_result({}, {static_cast<T>(num / norm)}, pred, [tgt, w, norm](Node<T>& o) {
    for (std::size_t s = 0; s < o.parents.size(); ++s) {
      Node<T>& p = *o.parents[s];
      auto g = grad_of(p);
      if (g.empty()) continue;
      auto gt = tgt[s].data();
      auto m = w[s].data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = static_cast<double>(p.value[i]) - gt[i];
        const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        g[i] += static_cast<T>(o.grad[0] * m[i] * sign / norm);
      }
    }
  });
}

template <typename T>
UVLoss<T> masked_l1_uv(const std::vector<Tensor<T>>& u, const std::vector<Tensor<T>>& v,
                       const std::vector<Tensor<T>>& weights,
                       const MultiScaleTarget<T>& target, double delta, bool normalize) {
  return {masked_l1(u, target.u, weights, delta, normalize),
          masked_l1(v, target.v, weights, delta, normalize)};
}

template <typename T>
Tensor<T> total_reg_loss(const Tensor<T>& l_u, const Tensor<T>& l_v, const Tensor<T>& l_seg) {
  for (const Tensor<T>* t : {&l_u, &l_v, &l_seg})
    require(t->defined() && t->numel() == 1, ErrorCode::kShapeMismatch,
            "total_reg_loss expects scalar terms");
  require(std::isfinite(l_u.item()) && std::isfinite(l_v.item()) && std::isfinite(l_seg.item()),
          ErrorCode::kNonFinite, "non-finite loss term");
  return ad::add(ad::add(l_u, l_v), l_seg);
}

template <typename T>
Tensor<T> age_l1(const Tensor<T>& pred, const Tensor<T>& target) {
  require(pred.defined() && target.defined(), ErrorCode::kInvalidArgument,
          "age_l1 needs predictions and targets");
  require(pred.numel() >= 1, ErrorCode::kInvalidArgument, "age_l1 on an empty batch");
  require(pred.shape() == target.shape(), ErrorCode::kShapeMismatch,
          "age_l1: prediction and target shapes differ");
  return ad::mean(ad::abs(ad::sub(pred, target.detach())));
}

#define CELEGANSER_INSTANTIATE_LOSSES(T)                                                      \
  template MultiScaleTarget<T> make_multiscale_target<T>(                                     \
      const std::vector<const ImageGrid*>&, const std::vector<const ImageGrid*>&,             \
      const std::vector<const ImageGrid*>&, int);                                             \
  template Tensor<T> multiscale_bce(const std::vector<Tensor<T>>&,                            \
                                    const std::vector<Tensor<T>>&);                           \
  template Tensor<T> multiscale_bce_with_logits(const std::vector<Tensor<T>>&,                \
                                                const std::vector<Tensor<T>>&);               \
  template Tensor<T> masked_l1(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,  \
                               const std::vector<Tensor<T>>&, double, bool);                  \
  template UVLoss<T> masked_l1_uv(const std::vector<Tensor<T>>&,                              \
                                  const std::vector<Tensor<T>>&,                              \
                                  const std::vector<Tensor<T>>&, const MultiScaleTarget<T>&,  \
                                  double, bool);                                              \
  template Tensor<T> total_reg_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> age_l1(const Tensor<T>&, const Tensor<T>&);

CELEGANSER_INSTANTIATE_LOSSES(float)
CELEGANSER_INSTANTIATE_LOSSES(double)

}  // namespace celeganser::losses
