#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "celeganser/image.hpp"
#include "celeganser/losses.hpp"
#include "celeganser/models.hpp"
#include "celeganser/pipeline.hpp"
#include "celeganser/synthgen.hpp"

namespace celeganser::training {

/// One network input with whichever targets its head needs.
struct Example {
  ImageGrid input;
  ImageGrid mask;
  ImageGrid u;
  ImageGrid v;
  ImageGrid clean;  // denoising target
  double age_hours = 0.0;
  int worm_id = 0;
  int timepoint = 0;
};

/// Full canvas resized to the coarse square; mask downsampled to match.
std::vector<Example> coarse_examples(const std::vector<synth::Sample>& samples, int coarse_size);
/// Crops of `crop_size` centered on the ground-truth mask.
std::vector<Example> fine_examples(const std::vector<synth::Sample>& samples, int crop_size);
/// Ground-truth-centered crops, feature-masked with the ground-truth mask and
/// resized to `input_size`. The Background draw is seeded per sample.
std::vector<Example> age_examples(const std::vector<synth::Sample>& samples, int crop_size,
                                  pipeline::MaskMode mode, int input_size, std::uint64_t seed);
/// Crops resized to `input_size` with seeded Gaussian noise added to the input.
std::vector<Example> denoise_examples(const std::vector<synth::Sample>& samples, int crop_size,
                                      int input_size, double noise_sigma, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean over batches
  double val_metric = 0.0;  // IoU (seg), UV error (seg+uv), MAE (age), L1 (denoise)
};

struct TrainOptions {
  int epochs = 30;
  int batch_size = 8;
  double lr0 = 5e-4;
  int halve_every = 20;
  std::uint64_t seed = 1;
  losses::UVMasking uv_masking = losses::UVMasking::Predicted;
  /// Start the age head at the mean training age.
  bool init_age_bias = true;
  /// Segmentation-only nets: start every mask logit at the log-odds of the
  /// training foreground fraction. Seg+UV nets keep the default init.
  bool init_mask_bias = true;
  std::function<void(const EpochLog&)> on_epoch;
};

/// Adam with the halving schedule; the loss is picked by the head set.
/// Throws kNonFinite on a non-finite batch loss.
std::vector<EpochLog> train(models::UNet<float>& net, const std::vector<Example>& train_set,
                            const std::vector<Example>& val_set, const TrainOptions& opt);

/// Validation metric of `train` for an arbitrary example set.
double evaluate(models::UNet<float>& net, const std::vector<Example>& examples);

}  // namespace celeganser::training
