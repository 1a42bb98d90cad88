#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "celeganser/ad/ops.hpp"
#include "celeganser/ad/tensor.hpp"

namespace celeganser::models {

enum class HeadSet {
  Seg,      // per-scale mask logit
  SegUV,    // per-scale mask logit, U, V
  Age,      // encoder + global pool + scalar
  Denoise,  // full-resolution image reconstruction (generic pretext)
};

std::string head_set_name(HeadSet head);
HeadSet parse_head_set(const std::string& name);

struct NetConfig {
  HeadSet head = HeadSet::Seg;
  int num_scales = 5;
  int base_channels = 16;
  int max_channels = 32;
  int blocks_per_stage = 1;
  int input_size = 128;
  int in_channels = 1;
  // Fixed output multipliers so the linear heads work near unit scale.
  double u_scale = 64.0;
  double v_scale = 8.0;
  double age_scale = 100.0;

  /// Channel width of encoder level l (level 0 is full resolution).
  int channels_at(int level) const;
  /// Throws kInvalidArgument for S < 1, input not divisible by 2^(S-1), or
  /// non-positive widths.
  void validate() const;

  std::map<std::string, std::string> echo() const;
  /// Reads the "net.*" keys of a config echo.
  static NetConfig from_echo(const std::map<std::string, std::string>& kv);
};

template <typename T>
struct NetOutput {
  std::vector<ad::Tensor<T>> mask_logits;  // index s-1 is scale s
  std::vector<ad::Tensor<T>> u;
  std::vector<ad::Tensor<T>> v;
  ad::Tensor<T> age;    // [N], hours
  ad::Tensor<T> image;  // [N, 1, H, W] (Denoise)
};

/// Residual U-Net. Encoder level 0 is a conv stem at input resolution; each
/// further level halves the resolution with a stride-2 conv and adds
/// `blocks_per_stage` residual blocks. The decoder upsamples, concatenates the
/// skip, and applies one conv per level. All tensors live in a name-keyed
/// registry; encoder tensors are prefixed "enc.".
template <typename T>
class UNet {
 public:
  explicit UNet(NetConfig cfg, std::uint64_t seed = 0);

  const NetConfig& config() const { return cfg_; }

  NetOutput<T> forward(const ad::Tensor<T>& input, bool training);

  /// He-uniform conv weights, zero biases, unit batchnorm scale, reset stats.
  void init_he_uniform(std::uint64_t seed);
  /// Every weight and bias set to 0 (batchnorm scale included).
  void zero_weights();

  /// All state tensors (trainable + batchnorm running stats), sorted by name.
  const std::map<std::string, ad::Tensor<T>>& state() const { return state_; }
  std::map<std::string, ad::Tensor<T>>& state() { return state_; }
  bool is_trainable(const std::string& name) const;
  std::vector<ad::Tensor<T>> trainable_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Shape of the deepest encoder activation for the given input side.
  ad::Shape encoder_output_shape(int batch, int input_side) const;

 private:
  struct ConvBn {
    ad::Tensor<T> weight;
    ad::Tensor<T> gamma;
    ad::Tensor<T> beta;
    ad::BatchNormState<T> stats;
    int stride = 1;
  };
  struct Residual {
    ConvBn a;
    ConvBn b;
  };
  struct Level {
    ConvBn entry;  // stem (level 0) or downsampling conv
    std::vector<Residual> blocks;
  };
  struct Head {
    ad::Tensor<T> weight;
    ad::Tensor<T> bias;
  };

  ConvBn make_conv_bn(const std::string& name, int in, int out, int stride);
  Head make_head(const std::string& name, int in, int out);
  ad::Tensor<T> declare(const std::string& name, ad::Shape shape, bool trainable);
  ad::Tensor<T> apply(ConvBn& layer, const ad::Tensor<T>& x, bool training, bool with_relu);
  ad::Tensor<T> apply(const Head& head, const ad::Tensor<T>& x);

  NetConfig cfg_;
  std::map<std::string, ad::Tensor<T>> state_;
  std::map<std::string, bool> trainable_;
  std::map<std::string, int> fan_in_;
  std::vector<Level> encoder_;
  std::vector<ConvBn> decoder_;  // index l merges level l+1 into level l
  std::vector<Head> heads_;      // index s-1
  Head age_fc_;
};

extern template class UNet<float>;
extern template class UNet<double>;

UNet<float> build_coarse_net(NetConfig cfg, std::uint64_t seed = 0);
UNet<float> build_fine_net(NetConfig cfg, std::uint64_t seed = 0);
UNet<float> build_age_net(NetConfig cfg, std::uint64_t seed = 0);
UNet<float> build_denoise_net(NetConfig cfg, std::uint64_t seed = 0);

}  // namespace celeganser::models
