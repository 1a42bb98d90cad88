#pragma once

#include <vector>

#include "celeganser/ad/tensor.hpp"
#include "celeganser/image.hpp"

namespace celeganser::losses {

using ad::Tensor;

/// Per-scale ground truth; index s-1 holds scale s at full size / 2^(s-1).
/// Every tensor is [N, 1, h, w].
template <typename T>
struct MultiScaleTarget {
  std::vector<Tensor<T>> mask;
  std::vector<Tensor<T>> u;
  std::vector<Tensor<T>> v;
};

/// Majority-downsampled masks and foreground-mean UV for a batch of
/// equally sized full-resolution rasters. `u`/`v` may be empty.
template <typename T>
MultiScaleTarget<T> make_multiscale_target(const std::vector<const ImageGrid*>& masks,
                                           const std::vector<const ImageGrid*>& u,
                                           const std::vector<const ImageGrid*>& v,
                                           int num_scales);

/// -sum_s (1/|I_s|) sum_i [y log x + (1-y) log(1-x)], x clamped to
/// [1e-7, 1 - 1e-7]; |I_s| counts the pixels of the whole batch at scale s.
template <typename T>
Tensor<T> multiscale_bce(const std::vector<Tensor<T>>& probs,
                         const std::vector<Tensor<T>>& targets);

/// Same objective evaluated from logits without clamping (stable softplus
/// form); used for training.
template <typename T>
Tensor<T> multiscale_bce_with_logits(const std::vector<Tensor<T>>& logits,
                                     const std::vector<Tensor<T>>& targets);

enum class UVMasking { Predicted, None, GroundTruth };

template <typename T>
struct UVLoss {
  Tensor<T> l_u;
  Tensor<T> l_v;
};

/// L = sum_s sum_i m_i |p_i - g_i| / (sum_s sum_i m_i + delta). The weights
/// are read as constants. With normalize=false the raw numerator is returned.
template <typename T>
Tensor<T> masked_l1(const std::vector<Tensor<T>>& pred, const std::vector<Tensor<T>>& target,
                    const std::vector<Tensor<T>>& weights, double delta = 1.0,
                    bool normalize = true);

template <typename T>
UVLoss<T> masked_l1_uv(const std::vector<Tensor<T>>& u, const std::vector<Tensor<T>>& v,
                       const std::vector<Tensor<T>>& weights,
                       const MultiScaleTarget<T>& target, double delta = 1.0,
                       bool normalize = true);

/// L_U + L_V + L_seg. Throws kNonFinite if any term is not finite.
template <typename T>
Tensor<T> total_reg_loss(const Tensor<T>& l_u, const Tensor<T>& l_v, const Tensor<T>& l_seg);

/// Batch mean of |a - a'|. Throws kInvalidArgument on an empty batch.
template <typename T>
Tensor<T> age_l1(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace celeganser::losses
