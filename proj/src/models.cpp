#include "celeganser/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "celeganser/error.hpp"

namespace celeganser::models {

using ad::Shape;
using ad::Tensor;

std::string head_set_name(HeadSet head) {
  switch (head) {
    case HeadSet::Seg: return "seg";
    case HeadSet::SegUV: return "seg+uv";
    case HeadSet::Age: return "age";
    case HeadSet::Denoise: return "denoise";
  }
  return "unknown";
}

HeadSet parse_head_set(const std::string& name) {
  for (HeadSet h : {HeadSet::Seg, HeadSet::SegUV, HeadSet::Age, HeadSet::Denoise})
    if (head_set_name(h) == name) return h;
  fail(ErrorCode::kInvalidArgument, "unknown head set '" + name + "'");
}

int NetConfig::channels_at(int level) const {
  long c = base_channels;
  for (int l = 0; l < level && c < max_channels; ++l) c *= 2;
  return static_cast<int>(std::min<long>(c, max_channels));
}

void NetConfig::validate() const {
  require(num_scales >= 1, ErrorCode::kInvalidArgument, "num_scales must be >= 1");
  require(base_channels >= 1 && max_channels >= base_channels, ErrorCode::kInvalidArgument,
          "channel widths must be positive with max >= base");
  require(blocks_per_stage >= 0, ErrorCode::kInvalidArgument, "blocks_per_stage must be >= 0");
  require(in_channels >= 1, ErrorCode::kInvalidArgument, "in_channels must be >= 1");
  const int step = 1 << (num_scales - 1);
  require(input_size >= step && input_size % step == 0, ErrorCode::kInvalidArgument,
          "input size " + std::to_string(input_size) + " not divisible by 2^(S-1) = " +
              std::to_string(step));
}

std::map<std::string, std::string> NetConfig::echo() const {
  auto d = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  return {{"net.head", head_set_name(head)},
          {"net.num_scales", std::to_string(num_scales)},
          {"net.base_channels", std::to_string(base_channels)},
          {"net.max_channels", std::to_string(max_channels)},
          {"net.blocks_per_stage", std::to_string(blocks_per_stage)},
          {"net.input_size", std::to_string(input_size)},
          {"net.in_channels", std::to_string(in_channels)},
          {"net.u_scale", d(u_scale)},
          {"net.v_scale", d(v_scale)},
          {"net.age_scale", d(age_scale)}};
}

NetConfig NetConfig::from_echo(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    require(it != kv.end(), ErrorCode::kCorruptFile, "config echo lacks " + key);
    return it->second;
  };
  NetConfig c;
  try {
    c.head = parse_head_set(get("net.head"));
    c.num_scales = std::stoi(get("net.num_scales"));
    c.base_channels = std::stoi(get("net.base_channels"));
    c.max_channels = std::stoi(get("net.max_channels"));
    c.blocks_per_stage = std::stoi(get("net.blocks_per_stage"));
    c.input_size = std::stoi(get("net.input_size"));
    c.in_channels = std::stoi(get("net.in_channels"));
    c.u_scale = std::stod(get("net.u_scale"));
    c.v_scale = std::stod(get("net.v_scale"));
    c.age_scale = std::stod(get("net.age_scale"));
  } catch (const std::logic_error&) {
    fail(ErrorCode::kCorruptFile, "malformed network config echo");
  }
  c.validate();
  return c;
}

template <typename T>
UNet<T>::UNet(NetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int levels = cfg_.num_scales;
  encoder_.resize(levels);
  encoder_[0].entry = make_conv_bn("enc.stem", cfg_.in_channels, cfg_.channels_at(0), 1);
  for (int l = 1; l < levels; ++l) {
    const std::string base = "enc.l" + std::to_string(l);
    const int c = cfg_.channels_at(l);
    encoder_[l].entry = make_conv_bn(base + ".down", cfg_.channels_at(l - 1), c, 2);
    for (int k = 0; k < cfg_.blocks_per_stage; ++k) {
      const std::string blk = base + ".res" + std::to_string(k);
      encoder_[l].blocks.push_back({make_conv_bn(blk + ".a", c, c, 1),
                                    make_conv_bn(blk + ".b", c, c, 1)});
    }
  }

  if (cfg_.head == HeadSet::Age) {
    age_fc_ = make_head("age.fc", cfg_.channels_at(levels - 1), 1);
  } else {
    decoder_.resize(levels > 1 ? levels - 1 : 0);
    for (int l = levels - 2; l >= 0; --l) {
      decoder_[l] = make_conv_bn("dec.l" + std::to_string(l),
                                 cfg_.channels_at(l + 1) + cfg_.channels_at(l),
                                 cfg_.channels_at(l), 1);
    }
    if (cfg_.head == HeadSet::Denoise) {
      heads_.push_back(make_head("head.s1", cfg_.channels_at(0), 1));
    } else {
      const int out = cfg_.head == HeadSet::SegUV ? 3 : 1;
      for (int s = 1; s <= levels; ++s)
        heads_.push_back(make_head("head.s" + std::to_string(s), cfg_.channels_at(s - 1), out));
    }
  }
  init_he_uniform(seed);
}

template <typename T>
Tensor<T> UNet<T>::declare(const std::string& name, Shape shape, bool trainable) {
  require(!state_.count(name), ErrorCode::kInvalidArgument, "duplicate tensor name " + name);
  Tensor<T> t = Tensor<T>::zeros(std::move(shape), trainable);
  state_.emplace(name, t);
  trainable_.emplace(name, trainable);
  return t;
}

template <typename T>
typename UNet<T>::ConvBn UNet<T>::make_conv_bn(const std::string& name, int in, int out,
                                               int stride) {
  ConvBn l;
  l.weight = declare(name + ".conv.weight", {out, in, 3, 3}, true);
  fan_in_[name + ".conv.weight"] = in * 9;
  l.gamma = declare(name + ".bn.weight", {out}, true);
  l.beta = declare(name + ".bn.bias", {out}, true);
  l.stats.running_mean = declare(name + ".bn.running_mean", {out}, false);
  l.stats.running_var = declare(name + ".bn.running_var", {out}, false);
  l.stride = stride;
  return l;
}

template <typename T>
typename UNet<T>::Head UNet<T>::make_head(const std::string& name, int in, int out) {
  Head h;
  h.weight = declare(name + ".weight", {out, in, 1, 1}, true);
  fan_in_[name + ".weight"] = in;
  h.bias = declare(name + ".bias", {out}, true);
  return h;
}

template <typename T>
void UNet<T>::init_he_uniform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, t] : state_) {
    auto data = t.mutable_data();
    auto fan = fan_in_.find(name);
    if (fan != fan_in_.end()) {
      const double bound = std::sqrt(6.0 / fan->second);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& v : data) v = static_cast<T>(dist(rng));
    } else if (name.ends_with(".bn.weight") || name.ends_with(".running_var")) {
      std::fill(data.begin(), data.end(), T(1));
    } else {
      std::fill(data.begin(), data.end(), T(0));
    }
  }
}

template <typename T>
void UNet<T>::zero_weights() {
  for (auto& [name, t] : state_) {
    auto data = t.mutable_data();
    const T fill = name.ends_with(".running_var") ? T(1) : T(0);
    std::fill(data.begin(), data.end(), fill);
  }
}

template <typename T>
bool UNet<T>::is_trainable(const std::string& name) const {
  auto it = trainable_.find(name);
  return it != trainable_.end() && it->second;
}

template <typename T>
std::vector<Tensor<T>> UNet<T>::trainable_parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& [name, t] : state_)
    if (is_trainable(name)) out.push_back(t);
  return out;
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : state_)
    if (is_trainable(name)) n += t.numel();
  return n;
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto& [name, t] : state_) t.zero_grad();
}

template <typename T>
Shape UNet<T>::encoder_output_shape(int batch, int input_side) const {
  const int side = input_side >> (cfg_.num_scales - 1);
  return {batch, cfg_.channels_at(cfg_.num_scales - 1), side, side};
}

template <typename T>
Tensor<T> UNet<T>::apply(ConvBn& layer, const Tensor<T>& x, bool training, bool with_relu) {
  Tensor<T> y = ad::conv2d(x, layer.weight, Tensor<T>(), layer.stride, 1);
  y = ad::batchnorm2d(y, layer.gamma, layer.beta, layer.stats, training);
  return with_relu ? ad::relu(y) : y;
}

template <typename T>
Tensor<T> UNet<T>::apply(const Head& head, const Tensor<T>& x) {
  return ad::conv2d(x, head.weight, head.bias, 1, 0);
}

template <typename T>
NetOutput<T> UNet<T>::forward(const Tensor<T>& input, bool training) {
  require(input.defined() && input.rank() == 4 && input.dim(1) == cfg_.in_channels,
          ErrorCode::kShapeMismatch, "network input must be [N, in_channels, H, W]");
  const int step = 1 << (cfg_.num_scales - 1);
  require(input.dim(2) % step == 0 && input.dim(3) % step == 0, ErrorCode::kShapeMismatch,
          "input " + ad::shape_string(input.shape()) + " not divisible by 2^(S-1)");

  const int levels = cfg_.num_scales;
  std::vector<Tensor<T>> feats(levels);
  Tensor<T> f = apply(encoder_[0].entry, input, training, true);
  feats[0] = f;
  for (int l = 1; l < levels; ++l) {
    f = apply(encoder_[l].entry, f, training, true);
    for (Residual& r : encoder_[l].blocks) {
      Tensor<T> y = apply(r.a, f, training, true);
      y = apply(r.b, y, training, false);
      f = ad::relu(ad::add(f, y));
    }
    feats[l] = f;
  }

  NetOutput<T> out;
  if (cfg_.head == HeadSet::Age) {
    Tensor<T> pooled = ad::global_avg_pool(feats[levels - 1]);
    Tensor<T> a = ad::scale(apply(age_fc_, pooled), static_cast<T>(cfg_.age_scale));
    out.age = a.reshaped({input.dim(0)});
    return out;
  }

  std::vector<Tensor<T>> dec(levels);
  dec[levels - 1] = feats[levels - 1];
  for (int l = levels - 2; l >= 0; --l) {
    Tensor<T> up = ad::upsample_bilinear2x(dec[l + 1]);
    dec[l] = apply(decoder_[l], ad::concat_channels(up, feats[l]), training, true);
  }

  if (cfg_.head == HeadSet::Denoise) {
    out.image = apply(heads_[0], dec[0]);
    return out;
  }
  for (int s = 1; s <= levels; ++s) {
    Tensor<T> h = apply(heads_[s - 1], dec[s - 1]);
    if (cfg_.head == HeadSet::SegUV) {
      out.mask_logits.push_back(ad::slice_channels(h, 0, 1));
      out.u.push_back(ad::scale(ad::slice_channels(h, 1, 2), static_cast<T>(cfg_.u_scale)));
      out.v.push_back(ad::scale(ad::slice_channels(h, 2, 3), static_cast<T>(cfg_.v_scale)));
    } else {
      out.mask_logits.push_back(h);
    }
  }
  return out;
}

template class UNet<float>;
template class UNet<double>;

namespace {
UNet<float> build_with(NetConfig cfg, HeadSet head, std::uint64_t seed) {
  require(cfg.head == head, ErrorCode::kInvalidArgument,
          "config head set '" + head_set_name(cfg.head) + "' does not match builder '" +
              head_set_name(head) + "'");
  return UNet<float>(std::move(cfg), seed);
}
}  // namespace

UNet<float> build_coarse_net(NetConfig cfg, std::uint64_t seed) {
  return build_with(std::move(cfg), HeadSet::Seg, seed);
}
UNet<float> build_fine_net(NetConfig cfg, std::uint64_t seed) {
  return build_with(std::move(cfg), HeadSet::SegUV, seed);
}
UNet<float> build_age_net(NetConfig cfg, std::uint64_t seed) {
  return build_with(std::move(cfg), HeadSet::Age, seed);
}
UNet<float> build_denoise_net(NetConfig cfg, std::uint64_t seed) {
  return build_with(std::move(cfg), HeadSet::Denoise, seed);
}

}  // namespace celeganser::models
