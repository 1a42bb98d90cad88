#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "celeganser/ad/tensor.hpp"
#include "celeganser/image.hpp"
#include "celeganser/models.hpp"
#include "celeganser/straightening.hpp"

namespace celeganser::pipeline {

struct CoarseImage {
  ImageGrid image;
  double scale_row = 1.0;  // original rows per coarse row
  double scale_col = 1.0;
};

/// Bilinear resize to coarse_size x coarse_size. Throws kInvalidArgument when
/// the image is smaller than the coarse square.
CoarseImage downsample_to_coarse(const ImageGrid& image, int coarse_size);

struct CropWindow {
  int top = 0;
  int left = 0;
  int side = 0;

  bool operator==(const CropWindow&) const = default;
};

/// Square window of `side` centered at (row, col), shifted to fit the image.
CropWindow centered_window(double row, double col, int side, int height, int width);
/// Window centered on the foreground centroid of a full-resolution mask.
CropWindow window_around_mask(const ImageGrid& mask, int side);

/// Binarizes the coarse map, maps its foreground centroid (r, c) to
/// (r * sr, c * sc) and centers the window there. Throws kWormNotFound when no
/// pixel exceeds the threshold.
CropWindow locate_crop(const ImageGrid& coarse_prob, double threshold, double scale_row,
                       double scale_col, int orig_height, int orig_width, int crop_size);

ImageGrid crop_window(const ImageGrid& image, const CropWindow& window);

enum class MaskMode { RawImage, WormOnly, Background, Silhouette, SilhouettePlusBG };

inline constexpr MaskMode kAllMaskModes[] = {MaskMode::RawImage, MaskMode::WormOnly,
                                             MaskMode::Background, MaskMode::Silhouette,
                                             MaskMode::SilhouettePlusBG};

/// raw_image, worm_only, background, silhouette, silhouette_bg.
std::string mask_mode_name(MaskMode mode);
MaskMode parse_mask_mode(const std::string& name);

/// Feature-masked copy of `image`. Background keeps one worm-free square of
/// side `patch_side` (default: half the shorter image side) at its original
/// position on a zero canvas; when 200 seeded draws find no such square the
/// worm pixels are painted with the median background intensity instead.
ImageGrid apply_feature_mask(const ImageGrid& image, const ImageGrid& mask, MaskMode mode,
                             std::uint64_t seed, int patch_side = 0);

struct SegScores {
  double iou = 0.0;
  double accuracy = 0.0;
};

SegScores evaluate_segmentation(const ImageGrid& pred, const ImageGrid& gt);

/// Mean over ground-truth mask pixels of (|du| + |dv|) / 2.
double evaluate_uv(const ImageGrid& pred_u, const ImageGrid& pred_v, const ImageGrid& gt_u,
                   const ImageGrid& gt_v, const ImageGrid& gt_mask);

struct AgeReport {
  double mae = 0.0;
  std::vector<std::pair<double, double>> scatter;  // (ground truth, prediction)
  std::vector<int> hist_gt;
  std::vector<int> hist_pred;
  double bin_width = 20.0;
};

/// Histogram bins of `bin_width` hours over [0, range]; values outside are
/// counted in the edge bins.
AgeReport evaluate_age(const std::vector<double>& preds, const std::vector<double>& gts,
                       double bin_width = 20.0, double range = 400.0);

/// [N, 1, H, W] float batch from equally sized rasters.
ad::Tensor<float> to_batch(const std::vector<const ImageGrid*>& images);

/// Scale-1 foreground probabilities, inference mode.
std::vector<ImageGrid> predict_mask_probs(models::UNet<float>& net,
                                          const std::vector<const ImageGrid*>& inputs,
                                          int batch_size = 8);

struct FinePrediction {
  ImageGrid prob;
  ImageGrid mask;  // prob > threshold
  ImageGrid u;
  ImageGrid v;
};

std::vector<FinePrediction> predict_fine(models::UNet<float>& net,
                                         const std::vector<const ImageGrid*>& inputs,
                                         double threshold = 0.5, int batch_size = 8);

std::vector<double> predict_ages(models::UNet<float>& net,
                                 const std::vector<const ImageGrid*>& inputs,
                                 int batch_size = 8);

/// Feature mask applied to a crop, then resized to the age net's input side.
ImageGrid prepare_age_input(const ImageGrid& crop, const ImageGrid& crop_mask, MaskMode mode,
                            std::uint64_t seed, int input_size);

/// Coarse probability map resized to the original image and binarized.
ImageGrid upsample_coarse_mask(const ImageGrid& coarse_prob, int height, int width,
                               double threshold = 0.5);

struct PipelineConfig {
  int coarse_size = 64;
  int crop_size = 128;
  double threshold = 0.5;
  MaskMode age_mode = MaskMode::RawImage;
  straightening::CanonicalGrid grid;
  std::uint64_t seed = 0;
};

struct PipelineResult {
  CoarseImage coarse;
  ImageGrid coarse_prob;
  CropWindow window;
  ImageGrid crop;
  FinePrediction fine;  // crop coordinates
  std::optional<straightening::Straightened> straightened;
  std::string straighten_error;  // set when straightening failed
  ImageGrid age_input;
  double age_hours = 0.0;
};

/// downsample -> coarse seg -> crop -> fine seg + UV -> straighten -> age.
PipelineResult run_full_pipeline(const ImageGrid& image, models::UNet<float>& coarse,
                                 models::UNet<float>& fine, models::UNet<float>& age,
                                 const PipelineConfig& cfg);

}  // namespace celeganser::pipeline
