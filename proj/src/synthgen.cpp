#include "celeganser/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "celeganser/error.hpp"

namespace celeganser::synth {

namespace {

using geometry::Centerline;
using geometry::Vec2;

double lerp_age(double a0, double a1, double age, double max_age) {
  const double t = std::clamp(age / max_age, 0.0, 1.0);
  return a0 + (a1 - a0) * t;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Salts for independent random streams of one sample.
constexpr std::uint64_t kSaltSpeckle = 0x5bd1e995;
constexpr std::uint64_t kSaltNoise = 0x27d4eb2f;
constexpr std::uint64_t kSaltAge = 0x165667b1;
constexpr std::uint64_t kSaltTraits = 0x85ebca6b;

struct Extent {
  double min_x, min_y, max_x, max_y;
};

Extent tube_extent(const std::vector<Vec2>& pts, const std::vector<double>& hw) {
  Extent e{1e300, 1e300, -1e300, -1e300};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    e.min_x = std::min(e.min_x, pts[i].x - hw[i]);
    e.min_y = std::min(e.min_y, pts[i].y - hw[i]);
    e.max_x = std::max(e.max_x, pts[i].x + hw[i]);
    e.max_y = std::max(e.max_y, pts[i].y + hw[i]);
  }
  return e;
}

bool self_contact(const std::vector<Vec2>& pts, const std::vector<double>& hw,
                  double step, double max_hw) {
  const std::size_t n = pts.size();
  // Samples closer than this along the arc are neighbours, not contacts.
  const auto skip = static_cast<std::size_t>(std::ceil(2.5 * max_hw / step)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + skip; j < n; ++j) {
      const double gap = hw[i] + hw[j] + 1.5;
      const Vec2 d = pts[i] - pts[j];
      if (geometry::dot(d, d) < gap * gap) return true;
    }
  }
  return false;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull));
}

double GenParams::length_at(double age) const {
  return lerp_age(length_age0, length_max_age, age, max_age);
}
double GenParams::max_halfwidth_at(double age) const {
  return lerp_age(halfwidth_age0, halfwidth_max_age, age, max_age);
}
double GenParams::worm_level_at(double age) const {
  return lerp_age(worm_level_age0, worm_level_max_age, age, max_age);
}
double GenParams::texture_freq_at(double age) const {
  return lerp_age(texture_freq_age0, texture_freq_max_age, age, max_age);
}
double GenParams::texture_contrast_at(double age) const {
  return lerp_age(texture_contrast_age0, texture_contrast_max_age, age, max_age);
}
double GenParams::speckle_rate_at(double age) const {
  return lerp_age(speckle_rate_age0, speckle_rate_max_age, age, max_age);
}

void GenParams::validate() const {
  auto check = [](bool ok, const char* what) {
    require(ok, ErrorCode::kInfeasibleParams, std::string("GenParams: ") + what);
  };
  check(canvas_height > 0 && canvas_width > 0, "canvas must be positive");
  check(centerline_points >= 2, "centerline_points must be >= 2");
  check(max_age > 0.0, "max_age must be positive");
  check(length_age0 > 0.0 && length_max_age > 0.0, "lengths must be positive");
  check(halfwidth_age0 > 0.0 && halfwidth_max_age > 0.0, "half-widths must be positive");
  check(width_exponent > 0.0, "width exponent must be positive");
  check(max_curvature > 0.0 && curvature_jitter >= 0.0, "curvature limits");
  check(max_extent > 0.0 && margin >= 0.0, "extent and margin");
  check(texture_freq_age0 > 0.0 && texture_freq_max_age > 0.0, "texture frequency");
  check(speckle_rate_age0 >= 0.0 && speckle_rate_max_age >= speckle_rate_age0,
        "speckle rate must be non-negative and non-decreasing in age");
  check(speckle_radius_min > 0.0 && speckle_radius_max >= speckle_radius_min,
        "speckle radius range");
  check(noise_sigma >= 0.0, "noise sigma");
  check(length_jitter >= 0.0 && length_jitter < 1.0 && width_jitter >= 0.0 &&
            width_jitter < 1.0,
        "identity jitter must lie in [0, 1)");
}

double half_width_at(double u, double length, double max_halfwidth, double exponent) {
  if (u <= 0.0 || u >= length) return 0.0;
  return max_halfwidth * std::pow(std::sin(std::numbers::pi * u / length), exponent);
}

WormIdentity make_identity(int worm_id, std::uint64_t base_seed, const GenParams& params) {
  WormIdentity id;
  id.worm_id = worm_id;
  id.seed = mix_seed(base_seed, static_cast<std::uint64_t>(worm_id));
  std::mt19937_64 rng(mix_seed(id.seed, kSaltTraits));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  id.length_scale = 1.0 + params.length_jitter * unit(rng);
  id.width_scale = 1.0 + params.width_jitter * unit(rng);
  id.texture_phase = std::numbers::pi * (unit(rng) + 1.0);
  return id;
}

GenParams personalize(const GenParams& params, const WormIdentity& identity) {
  GenParams p = params;
  p.length_age0 *= identity.length_scale;
  p.length_max_age *= identity.length_scale;
  p.halfwidth_age0 *= identity.width_scale;
  p.halfwidth_max_age *= identity.width_scale;
  p.texture_phase = identity.texture_phase;
  return p;
}

Centerline sample_centerline(std::uint64_t seed, const GenParams& params, double age) {
  params.validate();
  const int n = params.centerline_points;
  const double length = params.length_at(age);
  const double max_hw = params.max_halfwidth_at(age);
  const double step = length / (n - 1);

  std::vector<Vec2> pts(n);
  std::vector<double> hw(n);
  for (int i = 0; i < n; ++i)
    hw[i] = half_width_at(step * i, length, max_hw, params.width_exponent);

  for (int attempt = 0; attempt < 100; ++attempt) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    double heading = 2.0 * std::numbers::pi * unit(rng);
    double curvature = params.max_curvature * (unit(rng) - 0.5);
    pts[0] = {0.0, 0.0};
    for (int i = 1; i < n; ++i) {
      curvature = std::clamp(curvature + params.curvature_jitter * gauss(rng),
                             -params.max_curvature, params.max_curvature);
      heading += curvature * step;
      pts[i] = pts[i - 1] + Vec2{std::cos(heading), std::sin(heading)} * step;
    }

    const Extent e = tube_extent(pts, hw);
    const double span_x = e.max_x - e.min_x;
    const double span_y = e.max_y - e.min_y;
    const double room_x = params.canvas_width - 1 - 2.0 * params.margin - span_x;
    const double room_y = params.canvas_height - 1 - 2.0 * params.margin - span_y;
    if (span_x > params.max_extent || span_y > params.max_extent) continue;
    if (room_x < 0.0 || room_y < 0.0) continue;
    if (self_contact(pts, hw, step, max_hw)) continue;

    const Vec2 shift{params.margin - e.min_x + room_x * unit(rng),
                     params.margin - e.min_y + room_y * unit(rng)};
    for (Vec2& p : pts) p = p + shift;
    return geometry::resample_arclength(pts, n);
  }
  fail(ErrorCode::kInfeasibleParams,
       "no feasible centerline after 100 attempts (seed " + std::to_string(seed) + ")");
}

Sample render_worm(const Centerline& cl, double age, const GenParams& params,
                   std::uint64_t seed) {
  params.validate();
  const int h = params.canvas_height;
  const int w = params.canvas_width;
  const double length = cl.length();
  const double max_hw = params.max_halfwidth_at(age);

  Sample s;
  s.centerline = cl;
  s.age_hours = age;
  s.seed = seed;
  s.max_halfwidth = max_hw;
  s.width_exponent = params.width_exponent;

  // Tube as a union of discs around the centerline samples.
  s.mask = ImageGrid(h, w);
  for (std::size_t k = 0; k < cl.size(); ++k) {
    const double r = half_width_at(cl.arclen[k], length, max_hw, params.width_exponent);
    if (r <= 0.0) continue;
    const Vec2 c = cl.points[k];
    const int r0 = std::max(0, static_cast<int>(std::floor(c.y - r)));
    const int r1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + r)));
    const int c0 = std::max(0, static_cast<int>(std::floor(c.x - r)));
    const int c1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + r)));
    for (int y = r0; y <= r1; ++y) {
      for (int x = c0; x <= c1; ++x) {
        const double dx = x - c.x;
        const double dy = y - c.y;
        if (dx * dx + dy * dy <= r * r) s.mask.at(y, x) = 1.0;
      }
    }
  }
  require(s.mask.count_nonzero() > 0, ErrorCode::kInfeasibleParams,
          "rendered worm mask is empty");
  s.uv = geometry::build_uv_field(s.mask, cl, geometry::VRepresentation::SideToCenterline);

  ImageGrid image(h, w, params.background_level);

  std::mt19937_64 speckle_rng(mix_seed(seed, kSaltSpeckle));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::poisson_distribution<int> count_dist(params.speckle_rate_at(age) * h * w);
  s.speckle_count = params.speckle_rate_at(age) > 0.0 ? count_dist(speckle_rng) : 0;
  for (int i = 0; i < s.speckle_count; ++i) {
    const double cx = unit(speckle_rng) * (w - 1);
    const double cy = unit(speckle_rng) * (h - 1);
    const double radius = params.speckle_radius_min +
                          (params.speckle_radius_max - params.speckle_radius_min) *
                              unit(speckle_rng);
    const double amp = params.speckle_amplitude * (0.7 + 0.6 * unit(speckle_rng));
    const double reach = 2.5 * radius;
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - reach)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + reach)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - reach)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        image.at(y, x) += amp * std::exp(-0.5 * d2 / (radius * radius));
      }
    }
  }

  const double level = params.worm_level_at(age);
  const double freq = params.texture_freq_at(age);
  const double contrast = params.texture_contrast_at(age);
  const double head_center = 0.88 * length;
  const double head_spread = 0.05 * length;
  for (std::size_t i = 0; i < image.size(); ++i) {
    if (s.mask[i] == 0.0) continue;
    const double u = s.uv.u[i];
    const double band = std::sin(2.0 * std::numbers::pi * freq * u + params.texture_phase);
    const double head = (u - head_center) / head_spread;
    image[i] = level + contrast * band - params.head_marker_depth * std::exp(-head * head);
  }

  std::mt19937_64 noise_rng(mix_seed(seed, kSaltNoise));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& x : image.data())
    x = std::clamp(x + params.noise_sigma * noise(noise_rng), 0.0, 1.0);
  s.image = std::move(image);
  return s;
}

Sample generate_sample(const GenParams& params, const WormIdentity& identity,
                       int timepoint, int timepoints) {
  require(timepoints >= 1 && timepoint >= 0 && timepoint < timepoints,
          ErrorCode::kInvalidArgument, "timepoint out of range");
  const GenParams personal = personalize(params, identity);
  std::mt19937_64 age_rng(mix_seed(identity.seed, kSaltAge + timepoint));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double age = (timepoint + unit(age_rng)) * params.max_age / timepoints;
  const std::uint64_t seed = mix_seed(identity.seed, static_cast<std::uint64_t>(timepoint));
  const Centerline cl = sample_centerline(seed, personal, age);
  Sample s = render_worm(cl, age, personal, seed);
  s.worm_id = identity.worm_id;
  s.timepoint = timepoint;
  return s;
}

std::vector<Sample> generate_dataset(const DatasetSpec& spec) {
  spec.params.validate();
  require(spec.n_worms >= 1 && spec.timepoints >= 1, ErrorCode::kInvalidArgument,
          "dataset needs at least one worm and one timepoint");
  const int total = spec.n_worms * spec.timepoints;
  std::vector<Sample> samples(total);
  std::vector<std::string> errors(total);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < total; ++i) {
    const int worm = i / spec.timepoints;
    const int t = i % spec.timepoints;
    try {
      samples[i] = generate_sample(spec.params, make_identity(worm, spec.seed, spec.params),
                                   t, spec.timepoints);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  }
  for (const std::string& e : errors)
    if (!e.empty()) fail(ErrorCode::kInfeasibleParams, e);
  return samples;
}

IdentitySplit split_identities(std::vector<int> worm_ids, double train_fraction,
                               std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::kInvalidArgument,
          "train fraction must lie in (0, 1)");
  std::sort(worm_ids.begin(), worm_ids.end());
  worm_ids.erase(std::unique(worm_ids.begin(), worm_ids.end()), worm_ids.end());
  const int n = static_cast<int>(worm_ids.size());
  require(n >= 2, ErrorCode::kInvalidArgument, "split needs at least two identities");

  // Fisher-Yates with an explicit generator so the permutation does not
  // depend on the standard library's shuffle.
  std::mt19937_64 rng(mix_seed(seed, 0x51ull));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(worm_ids[i], worm_ids[j]);
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * n)), 1, n - 1);
  IdentitySplit split;
  split.train_ids.assign(worm_ids.begin(), worm_ids.begin() + n_train);
  split.val_ids.assign(worm_ids.begin() + n_train, worm_ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.val_ids.begin(), split.val_ids.end());
  return split;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_by_identity(
    const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed) {
  std::vector<int> ids;
  ids.reserve(samples.size());
  for (const Sample& s : samples) ids.push_back(s.worm_id);
  const IdentitySplit split = split_identities(std::move(ids), train_fraction, seed);
  const std::set<int> train(split.train_ids.begin(), split.train_ids.end());
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (const Sample& s : samples) (train.count(s.worm_id) ? out.first : out.second).push_back(s);
  return out;
}

}  // namespace celeganser::synth
