#include "celeganser/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "celeganser/ad/adam.hpp"
#include "celeganser/ad/ops.hpp"
#include "celeganser/error.hpp"

namespace celeganser::training {

using ad::Tensor;
using models::HeadSet;

namespace {

ImageGrid shrink_mask(const ImageGrid& mask, int side) {
  if (mask.height() == side && mask.width() == side) return mask;
  if (mask.height() == mask.width() && mask.height() % side == 0)
    return downsample_majority(mask, mask.height() / side);
  return threshold(resize_bilinear(mask, side, side), 0.5);
}

ImageGrid to_side(const ImageGrid& g, int side) {
  if (g.height() == side && g.width() == side) return g;
  return resize_bilinear(g, side, side);
}

}  // namespace

std::vector<Example> coarse_examples(const std::vector<synth::Sample>& samples, int coarse_size) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Example e;
    e.input = pipeline::downsample_to_coarse(s.image, coarse_size).image;
    e.mask = shrink_mask(s.mask, coarse_size);
    e.age_hours = s.age_hours;
    e.worm_id = s.worm_id;
    e.timepoint = s.timepoint;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> fine_examples(const std::vector<synth::Sample>& samples, int crop_size) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto w = pipeline::window_around_mask(s.mask, crop_size);
    Example e;
    e.input = pipeline::crop_window(s.image, w);
    e.mask = pipeline::crop_window(s.mask, w);
    e.u = pipeline::crop_window(s.uv.u, w);
    e.v = pipeline::crop_window(s.uv.v, w);
    e.age_hours = s.age_hours;
    e.worm_id = s.worm_id;
    e.timepoint = s.timepoint;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> age_examples(const std::vector<synth::Sample>& samples, int crop_size,
                                  pipeline::MaskMode mode, int input_size, std::uint64_t seed) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto w = pipeline::window_around_mask(s.mask, crop_size);
    const ImageGrid crop = pipeline::crop_window(s.image, w);
    const ImageGrid mask = pipeline::crop_window(s.mask, w);
    Example e;
    e.input = pipeline::prepare_age_input(crop, mask, mode, synth::mix_seed(seed, s.seed),
                                          input_size);
    e.age_hours = s.age_hours;
    e.worm_id = s.worm_id;
    e.timepoint = s.timepoint;
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Example> denoise_examples(const std::vector<synth::Sample>& samples, int crop_size,
                                      int input_size, double noise_sigma, std::uint64_t seed) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto w = pipeline::window_around_mask(s.mask, crop_size);
    Example e;
    e.clean = to_side(pipeline::crop_window(s.image, w), input_size);
    e.input = e.clean;
    std::mt19937_64 rng(synth::mix_seed(seed, s.seed));
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (double& x : e.input.data()) x += noise(rng);
    e.age_hours = s.age_hours;
    e.worm_id = s.worm_id;
    e.timepoint = s.timepoint;
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

std::vector<const ImageGrid*> field(const std::vector<const Example*>& batch,
                                    ImageGrid Example::*member) {
  std::vector<const ImageGrid*> out;
  for (const Example* e : batch) out.push_back(&(e->*member));
  return out;
}

Tensor<float> age_targets(const std::vector<const Example*>& batch) {
  std::vector<float> a;
  for (const Example* e : batch) a.push_back(static_cast<float>(e->age_hours));
  return Tensor<float>::from_vector({static_cast<int>(batch.size())}, std::move(a));
}

Tensor<float> mask_weights(const Tensor<float>& logits) {
  std::vector<float> w(logits.numel());
  auto z = logits.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double zi = z[i];
    w[i] = static_cast<float>(zi >= 0 ? 1.0 / (1.0 + std::exp(-zi))
                                      : std::exp(zi) / (1.0 + std::exp(zi)));
  }
  return Tensor<float>::from_vector(logits.shape(), std::move(w));
}

Tensor<float> batch_loss(models::UNet<float>& net, const std::vector<const Example*>& batch,
                         losses::UVMasking masking) {
  const auto& cfg = net.config();
  auto out = net.forward(pipeline::to_batch(field(batch, &Example::input)), true);
  switch (cfg.head) {
    case HeadSet::Seg: {
      auto target = losses::make_multiscale_target<float>(field(batch, &Example::mask), {}, {},
                                                          cfg.num_scales);
      return losses::multiscale_bce_with_logits(out.mask_logits, target.mask);
    }
    case HeadSet::SegUV: {
      auto target = losses::make_multiscale_target<float>(
          field(batch, &Example::mask), field(batch, &Example::u), field(batch, &Example::v),
          cfg.num_scales);
      Tensor<float> l_seg = losses::multiscale_bce_with_logits(out.mask_logits, target.mask);
      std::vector<Tensor<float>> weights;
      for (std::size_t s = 0; s < out.mask_logits.size(); ++s) {
        switch (masking) {
          case losses::UVMasking::Predicted:
            weights.push_back(mask_weights(out.mask_logits[s]));
            break;
          case losses::UVMasking::None:
            weights.push_back(Tensor<float>::full(out.mask_logits[s].shape(), 1.0f));
            break;
          case losses::UVMasking::GroundTruth:
            weights.push_back(target.mask[s]);
            break;
        }
      }
      auto uv = losses::masked_l1_uv(out.u, out.v, weights, target);
      return losses::total_reg_loss(uv.l_u, uv.l_v, l_seg);
    }
    case HeadSet::Age:
      return losses::age_l1(out.age, age_targets(batch));
    case HeadSet::Denoise: {
      Tensor<float> clean = pipeline::to_batch(field(batch, &Example::clean));
      return ad::mean(ad::abs(ad::sub(out.image, clean)));
    }
  }
  fail(ErrorCode::kInvalidArgument, "unknown head set");
}

}  // namespace

double evaluate(models::UNet<float>& net, const std::vector<Example>& examples) {
  require(!examples.empty(), ErrorCode::kInvalidArgument, "evaluation on an empty set");
  std::vector<const ImageGrid*> inputs;
  for (const auto& e : examples) inputs.push_back(&e.input);
  double acc = 0.0;
  switch (net.config().head) {
    case HeadSet::Seg: {
      auto probs = pipeline::predict_mask_probs(net, inputs);
      for (std::size_t i = 0; i < examples.size(); ++i)
        acc += pipeline::evaluate_segmentation(threshold(probs[i], 0.5), examples[i].mask).iou;
      break;
    }
    case HeadSet::SegUV: {
      auto preds = pipeline::predict_fine(net, inputs);
      for (std::size_t i = 0; i < examples.size(); ++i)
        acc += pipeline::evaluate_uv(preds[i].u, preds[i].v, examples[i].u, examples[i].v,
                                     examples[i].mask);
      break;
    }
    case HeadSet::Age: {
      auto ages = pipeline::predict_ages(net, inputs);
      for (std::size_t i = 0; i < examples.size(); ++i)
        acc += std::abs(ages[i] - examples[i].age_hours);
      break;
    }
    case HeadSet::Denoise: {
      for (std::size_t i = 0; i < examples.size(); ++i) {
        auto out = net.forward(pipeline::to_batch({&examples[i].input}), false);
        auto d = out.image.data();
        double l1 = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) l1 += std::abs(d[k] - examples[i].clean[k]);
        acc += l1 / static_cast<double>(d.size());
      }
      break;
    }
  }
  return acc / static_cast<double>(examples.size());
}

std::vector<EpochLog> train(models::UNet<float>& net, const std::vector<Example>& train_set,
                            const std::vector<Example>& val_set, const TrainOptions& opt) {
  require(!train_set.empty(), ErrorCode::kInvalidArgument, "empty training set");
  require(opt.epochs >= 0 && opt.batch_size >= 1, ErrorCode::kInvalidArgument,
          "epochs must be >= 0 and batch size >= 1");

  if (net.config().head == HeadSet::Age && opt.init_age_bias) {
    double mean_age = 0.0;
    for (const auto& e : train_set) mean_age += e.age_hours;
    mean_age /= static_cast<double>(train_set.size());
    auto bias = net.state().at("age.fc.bias").mutable_data();
    bias[0] = static_cast<float>(mean_age / net.config().age_scale);
  }

  if (net.config().head == HeadSet::Seg && opt.init_mask_bias) {
    double fg = 0.0, total = 0.0;
    for (const auto& e : train_set) {
      for (double m : e.mask.data()) fg += m;
      total += static_cast<double>(e.mask.data().size());
    }
    const double p = std::clamp(fg / total, 0.01, 0.99);
    for (int s = 1; s <= net.config().num_scales; ++s)
      net.state().at("head.s" + std::to_string(s) + ".bias").mutable_data()[0] =
          static_cast<float>(std::log(p / (1.0 - p)));
  }

  auto params = net.trainable_parameters();
  ad::AdamState adam;
  std::vector<std::size_t> order(train_set.size());
  std::vector<EpochLog> log;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    adam.lr = ad::lr_schedule(epoch, opt.lr0, opt.halve_every);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(synth::mix_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      net.zero_grad();
      Tensor<float> loss = batch_loss(net, batch, opt.uv_masking);
      const double value = loss.item();
      require(std::isfinite(value), ErrorCode::kNonFinite,
              "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                  std::to_string(batches));
      ad::backward(loss);
      ad::adam_step(params, adam);
      loss_sum += value;
      ++batches;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = adam.lr;
    entry.train_loss = loss_sum / batches;
    entry.val_metric = val_set.empty() ? std::nan("") : evaluate(net, val_set);
    log.push_back(entry);
    if (opt.on_epoch) opt.on_epoch(entry);
  }
  return log;
}

}  // namespace celeganser::training
