#include "celeganser/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "celeganser/ad/ops.hpp"
#include "celeganser/error.hpp"

namespace celeganser::pipeline {

CoarseImage downsample_to_coarse(const ImageGrid& image, int coarse_size) {
  require(coarse_size >= 1, ErrorCode::kInvalidArgument, "coarse size must be >= 1");
  require(image.height() >= coarse_size && image.width() >= coarse_size,
          ErrorCode::kInvalidArgument,
          "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
              " is smaller than the coarse size " + std::to_string(coarse_size));
  CoarseImage out;
  out.image = resize_bilinear(image, coarse_size, coarse_size);
  out.scale_row = static_cast<double>(image.height()) / coarse_size;
  out.scale_col = static_cast<double>(image.width()) / coarse_size;
  return out;
}

CropWindow centered_window(double row, double col, int side, int height, int width) {
  require(side >= 1 && side <= height && side <= width, ErrorCode::kInvalidArgument,
          "crop side " + std::to_string(side) + " does not fit the image");
  CropWindow w;
  w.side = side;
  w.top = std::clamp(static_cast<int>(std::lround(row - side / 2.0)), 0, height - side);
  w.left = std::clamp(static_cast<int>(std::lround(col - side / 2.0)), 0, width - side);
  return w;
}

namespace {

// Foreground centroid; false when nothing exceeds the level.
bool centroid_above(const ImageGrid& grid, double level, double& row, double& col) {
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (int r = 0; r < grid.height(); ++r)
    for (int c = 0; c < grid.width(); ++c)
      if (grid.at(r, c) > level) {
        sr += r;
        sc += c;
        ++n;
      }
  if (n == 0) return false;
  row = sr / static_cast<double>(n);
  col = sc / static_cast<double>(n);
  return true;
}

}  // namespace

CropWindow window_around_mask(const ImageGrid& mask, int side) {
  double r = 0, c = 0;
  require(centroid_above(mask, 0.5, r, c), ErrorCode::kEmptyMask,
          "cannot center a window on an empty mask");
  return centered_window(r, c, side, mask.height(), mask.width());
}

CropWindow locate_crop(const ImageGrid& coarse_prob, double threshold, double scale_row,
                       double scale_col, int orig_height, int orig_width, int crop_size) {
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::kInvalidArgument,
          "threshold must lie in (0, 1)");
  double r = 0, c = 0;
  require(centroid_above(coarse_prob, threshold, r, c), ErrorCode::kWormNotFound,
          "worm not found: no coarse pixel above threshold");
  return centered_window(r * scale_row, c * scale_col, crop_size, orig_height, orig_width);
}

ImageGrid crop_window(const ImageGrid& image, const CropWindow& window) {
  return crop(image, window.top, window.left, window.side, window.side);
}

std::string mask_mode_name(MaskMode mode) {
  switch (mode) {
    case MaskMode::RawImage: return "raw_image";
    case MaskMode::WormOnly: return "worm_only";
    case MaskMode::Background: return "background";
    case MaskMode::Silhouette: return "silhouette";
    case MaskMode::SilhouettePlusBG: return "silhouette_bg";
  }
  return "unknown";
}

MaskMode parse_mask_mode(const std::string& name) {
  for (MaskMode m : kAllMaskModes)
    if (mask_mode_name(m) == name) return m;
  fail(ErrorCode::kInvalidArgument, "unknown mask mode '" + name + "'");
}

namespace {

ImageGrid background_only(const ImageGrid& image, const ImageGrid& mask, std::uint64_t seed,
                          int patch) {
  const int h = image.height(), w = image.width();
  // Summed-area table of the mask for O(1) overlap tests.
  std::vector<long> sat(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  auto at = [&](int r, int c) -> long& { return sat[static_cast<std::size_t>(r) * (w + 1) + c]; };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      at(r + 1, c + 1) = at(r, c + 1) + at(r + 1, c) - at(r, c) + (mask.at(r, c) > 0.5 ? 1 : 0);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> top_dist(0, h - patch), left_dist(0, w - patch);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const int t = top_dist(rng), l = left_dist(rng);
    const long overlap = at(t + patch, l + patch) - at(t, l + patch) - at(t + patch, l) + at(t, l);
    if (overlap != 0) continue;
    ImageGrid out(h, w, 0.0);
    for (int r = t; r < t + patch; ++r)
      for (int c = l; c < l + patch; ++c) out.at(r, c) = image.at(r, c);
    return out;
  }

  std::vector<double> bg;
  for (std::size_t i = 0; i < image.size(); ++i)
    if (mask[i] <= 0.5) bg.push_back(image[i]);
  double median = 0.0;
  if (!bg.empty()) {
    auto mid = bg.begin() + static_cast<std::ptrdiff_t>(bg.size() / 2);
    std::nth_element(bg.begin(), mid, bg.end());
    median = *mid;
  }
  ImageGrid out = image;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i] > 0.5) out[i] = median;
  return out;
}

}  // namespace

ImageGrid apply_feature_mask(const ImageGrid& image, const ImageGrid& mask, MaskMode mode,
                             std::uint64_t seed, int patch_side) {
  require(image.same_dims(mask), ErrorCode::kShapeMismatch,
          "feature mask: image and mask dimensions differ");
  ImageGrid out = image;
  switch (mode) {
    case MaskMode::RawImage:
      break;
    case MaskMode::WormOnly:
      for (std::size_t i = 0; i < out.size(); ++i)
        if (mask[i] <= 0.5) out[i] = 0.0;
      break;
    case MaskMode::Silhouette:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] > 0.5 ? 1.0 : 0.0;
      break;
    case MaskMode::SilhouettePlusBG:
      for (std::size_t i = 0; i < out.size(); ++i)
        if (mask[i] > 0.5) out[i] = 1.0;
      break;
    case MaskMode::Background: {
      const int patch =
          patch_side > 0 ? patch_side : std::max(1, std::min(image.height(), image.width()) / 2);
      require(patch <= image.height() && patch <= image.width(), ErrorCode::kInvalidArgument,
              "background patch larger than the image");
      out = background_only(image, mask, seed, patch);
      break;
    }
  }
  return out;
}

SegScores evaluate_segmentation(const ImageGrid& pred, const ImageGrid& gt) {
  require(pred.same_dims(gt), ErrorCode::kShapeMismatch,
          "segmentation masks differ in dimensions");
  require(!gt.empty(), ErrorCode::kInvalidArgument, "empty rasters");
  std::size_t inter = 0, uni = 0, match = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool p = pred[i] > 0.5, g = gt[i] > 0.5;
    inter += p && g;
    uni += p || g;
    match += p == g;
  }
  SegScores s;
  s.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  s.accuracy = static_cast<double>(match) / static_cast<double>(gt.size());
  return s;
}

double evaluate_uv(const ImageGrid& pred_u, const ImageGrid& pred_v, const ImageGrid& gt_u,
                   const ImageGrid& gt_v, const ImageGrid& gt_mask) {
  for (const ImageGrid* g : {&pred_u, &pred_v, &gt_u, &gt_v})
    require(g->same_dims(gt_mask), ErrorCode::kShapeMismatch, "UV rasters differ in dimensions");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt_mask.size(); ++i) {
    if (gt_mask[i] <= 0.5) continue;
    acc += (std::abs(pred_u[i] - gt_u[i]) + std::abs(pred_v[i] - gt_v[i])) / 2.0;
    ++n;
  }
  require(n > 0, ErrorCode::kEmptyMask, "UV error over an empty ground-truth mask");
  return acc / static_cast<double>(n);
}

AgeReport evaluate_age(const std::vector<double>& preds, const std::vector<double>& gts,
                       double bin_width, double range) {
  require(!preds.empty() && preds.size() == gts.size(), ErrorCode::kInvalidArgument,
          "age evaluation needs equal non-empty prediction and ground-truth lists");
  require(bin_width > 0 && range > 0, ErrorCode::kInvalidArgument, "bad histogram layout");
  AgeReport r;
  r.bin_width = bin_width;
  const int bins = static_cast<int>(std::ceil(range / bin_width));
  r.hist_gt.assign(bins, 0);
  r.hist_pred.assign(bins, 0);
  auto bin_of = [&](double x) {
    return std::clamp(static_cast<int>(std::floor(x / bin_width)), 0, bins - 1);
  };
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    acc += std::abs(preds[i] - gts[i]);
    r.scatter.emplace_back(gts[i], preds[i]);
    ++r.hist_gt[bin_of(gts[i])];
    ++r.hist_pred[bin_of(preds[i])];
  }
  r.mae = acc / static_cast<double>(preds.size());
  return r;
}

ad::Tensor<float> to_batch(const std::vector<const ImageGrid*>& images) {
  require(!images.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const int h = images.front()->height(), w = images.front()->width();
  std::vector<float> data;
  data.reserve(images.size() * static_cast<std::size_t>(h) * w);
  for (const ImageGrid* g : images) {
    require(g->height() == h && g->width() == w, ErrorCode::kShapeMismatch,
            "batch images differ in size");
    for (double x : g->data()) data.push_back(static_cast<float>(x));
  }
  return ad::Tensor<float>::from_vector({static_cast<int>(images.size()), 1, h, w},
                                        std::move(data));
}

namespace {

ImageGrid plane(const ad::Tensor<float>& t, int item, double factor = 1.0) {
  const int h = t.dim(2), w = t.dim(3);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  ImageGrid g(h, w);
  auto src = t.data().subspan(static_cast<std::size_t>(item) * n * t.dim(1), n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(src[i]) * factor;
  return g;
}

ImageGrid sigmoid_plane(const ad::Tensor<float>& logits, int item) {
  ImageGrid g = plane(logits, item);
  for (double& x : g.data()) x = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return g;
}

template <typename F>
void for_batches(const std::vector<const ImageGrid*>& inputs, int batch_size, F&& f) {
  require(batch_size >= 1, ErrorCode::kInvalidArgument, "batch size must be >= 1");
  for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
    const std::size_t end = std::min(inputs.size(), start + batch_size);
    std::vector<const ImageGrid*> chunk(inputs.begin() + start, inputs.begin() + end);
    f(start, chunk);
  }
}

}  // namespace

std::vector<ImageGrid> predict_mask_probs(models::UNet<float>& net,
                                          const std::vector<const ImageGrid*>& inputs,
                                          int batch_size) {
  std::vector<ImageGrid> out(inputs.size());
  for_batches(inputs, batch_size, [&](std::size_t start, const auto& chunk) {
    auto res = net.forward(to_batch(chunk), false);
    require(!res.mask_logits.empty(), ErrorCode::kInvalidArgument,
            "network has no segmentation head");
    for (std::size_t i = 0; i < chunk.size(); ++i)
      out[start + i] = sigmoid_plane(res.mask_logits[0], static_cast<int>(i));
  });
  return out;
}

std::vector<FinePrediction> predict_fine(models::UNet<float>& net,
                                         const std::vector<const ImageGrid*>& inputs,
                                         double threshold, int batch_size) {
  require(net.config().head == models::HeadSet::SegUV, ErrorCode::kInvalidArgument,
          "fine prediction needs a seg+uv network");
  std::vector<FinePrediction> out(inputs.size());
  for_batches(inputs, batch_size, [&](std::size_t start, const auto& chunk) {
    auto res = net.forward(to_batch(chunk), false);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      FinePrediction& p = out[start + i];
      p.prob = sigmoid_plane(res.mask_logits[0], static_cast<int>(i));
      p.mask = celeganser::threshold(p.prob, threshold);
      p.u = plane(res.u[0], static_cast<int>(i));
      p.v = plane(res.v[0], static_cast<int>(i));
    }
  });
  return out;
}

std::vector<double> predict_ages(models::UNet<float>& net,
                                 const std::vector<const ImageGrid*>& inputs, int batch_size) {
  require(net.config().head == models::HeadSet::Age, ErrorCode::kInvalidArgument,
          "age prediction needs an age network");
  std::vector<double> out(inputs.size());
  for_batches(inputs, batch_size, [&](std::size_t start, const auto& chunk) {
    auto res = net.forward(to_batch(chunk), false);
    for (std::size_t i = 0; i < chunk.size(); ++i) out[start + i] = res.age.data()[i];
  });
  return out;
}

ImageGrid prepare_age_input(const ImageGrid& crop, const ImageGrid& crop_mask, MaskMode mode,
                            std::uint64_t seed, int input_size) {
  ImageGrid masked = apply_feature_mask(crop, crop_mask, mode, seed);
  if (masked.height() == input_size && masked.width() == input_size) return masked;
  return resize_bilinear(masked, input_size, input_size);
}

ImageGrid upsample_coarse_mask(const ImageGrid& coarse_prob, int height, int width,
                               double threshold) {
  return celeganser::threshold(resize_bilinear(coarse_prob, height, width), threshold);
}

PipelineResult run_full_pipeline(const ImageGrid& image, models::UNet<float>& coarse,
                                 models::UNet<float>& fine, models::UNet<float>& age,
                                 const PipelineConfig& cfg) {
  PipelineResult r;
  r.coarse = downsample_to_coarse(image, cfg.coarse_size);
  r.coarse_prob = predict_mask_probs(coarse, {&r.coarse.image}).front();
  r.window = locate_crop(r.coarse_prob, cfg.threshold, r.coarse.scale_row, r.coarse.scale_col,
                         image.height(), image.width(), cfg.crop_size);
  r.crop = crop_window(image, r.window);
  r.fine = predict_fine(fine, {&r.crop}, cfg.threshold).front();

  try {
    auto cl = straightening::centerline_from_uv(r.fine.u, r.fine.v, r.fine.mask);
    cl = straightening::orient_head_tail(cl, r.fine.u, r.fine.mask);
    r.straightened = straightening::straighten_with_mask(r.crop, cl, r.fine.mask, cfg.grid);
  } catch (const Error& e) {
    r.straighten_error = std::string(error_code_name(e.code())) + ": " + e.what();
  }

  r.age_input = prepare_age_input(r.crop, r.fine.mask, cfg.age_mode, cfg.seed,
                                  age.config().input_size);
  r.age_hours = predict_ages(age, {&r.age_input}).front();
  return r;
}

}  // namespace celeganser::pipeline
