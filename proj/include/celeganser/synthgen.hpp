#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "celeganser/geometry.hpp"
#include "celeganser/image.hpp"

namespace celeganser::synth {

inline constexpr double kMaxAgeHours = 400.0;

/// Appearance and pose model. Every age-dependent quantity is a linear map
/// from [0, max_age] onto [at_age0, at_max_age].
struct GenParams {
  int canvas_height = 256;
  int canvas_width = 256;
  int centerline_points = 256;
  double max_age = kMaxAgeHours;

  double length_age0 = 60.0;
  double length_max_age = 120.0;
  double halfwidth_age0 = 4.0;
  double halfwidth_max_age = 8.0;
  double width_exponent = 0.5;

  double max_curvature = 0.04;     // 1/px
  double curvature_jitter = 0.004; // per-step random-walk sigma of curvature
  double max_extent = 110.0;       // bounding box side of the tube, px
  double margin = 4.0;             // keep-out border, px

  double worm_level_age0 = 0.52;
  double worm_level_max_age = 0.72;
  double texture_freq_age0 = 1.0 / 16.0;  // cycles per px of arc length
  double texture_freq_max_age = 1.0 / 8.0;
  double texture_contrast_age0 = 0.03;
  double texture_contrast_max_age = 0.15;
  double texture_phase = 0.0;
  double head_marker_depth = 0.18;

  double background_level = 0.25;
  double speckle_rate_age0 = 0.0;        // expected blobs per px
  double speckle_rate_max_age = 0.06;
  double speckle_amplitude = 0.22;
  double speckle_radius_min = 0.8;
  double speckle_radius_max = 1.6;
  double noise_sigma = 0.03;

  // Identity-linked multiplicative spread on body size.
  double length_jitter = 0.15;
  double width_jitter = 0.10;

  double length_at(double age) const;
  double max_halfwidth_at(double age) const;
  double worm_level_at(double age) const;
  double texture_freq_at(double age) const;
  double texture_contrast_at(double age) const;
  double speckle_rate_at(double age) const;

  /// Throws kInfeasibleParams when a range is non-positive or the speckle
  /// rate decreases with age.
  void validate() const;
};

/// h(u) = h_max * sin(pi * u / L)^exponent.
double half_width_at(double u, double length, double max_halfwidth, double exponent);

/// Persistent per-worm traits derived from the identity seed.
struct WormIdentity {
  int worm_id = 0;
  std::uint64_t seed = 0;
  double length_scale = 1.0;
  double width_scale = 1.0;
  double texture_phase = 0.0;
};

WormIdentity make_identity(int worm_id, std::uint64_t base_seed, const GenParams& params);
/// Params with the identity's size and texture traits folded in.
GenParams personalize(const GenParams& params, const WormIdentity& identity);

struct Sample {
  ImageGrid image;  // [0, 1]
  ImageGrid mask;
  geometry::UVField uv;
  geometry::Centerline centerline;
  double age_hours = 0.0;
  int worm_id = 0;
  int timepoint = 0;
  std::uint64_t seed = 0;
  double max_halfwidth = 0.0;
  double width_exponent = 0.5;
  int speckle_count = 0;
};

/// Random smooth centerline of length params.length_at(age) whose tube fits
/// on the canvas without self-contact. Up to 100 attempts, then
/// kInfeasibleParams.
geometry::Centerline sample_centerline(std::uint64_t seed, const GenParams& params,
                                       double age);

Sample render_worm(const geometry::Centerline& cl, double age, const GenParams& params,
                   std::uint64_t seed);

/// One timepoint of one identity.
Sample generate_sample(const GenParams& params, const WormIdentity& identity,
                       int timepoint, int timepoints);

struct DatasetSpec {
  GenParams params;
  int n_worms = 40;
  int timepoints = 10;
  std::uint64_t seed = 1;
};

/// n_worms x timepoints samples, ordered by worm then timepoint. Ages within a
/// worm increase with timepoint and cover [0, max_age).
std::vector<Sample> generate_dataset(const DatasetSpec& spec);

struct IdentitySplit {
  std::vector<int> train_ids;  // sorted
  std::vector<int> val_ids;    // sorted
};

/// Shuffle the distinct ids with `seed` and take round(fraction * n) for
/// training, at least one on each side.
IdentitySplit split_identities(std::vector<int> worm_ids, double train_fraction,
                               std::uint64_t seed);

std::pair<std::vector<Sample>, std::vector<Sample>> split_by_identity(
    const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace celeganser::synth
