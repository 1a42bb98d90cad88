#include "celeganser/straightening.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "celeganser/error.hpp"

namespace celeganser::straightening {

using geometry::Centerline;
using geometry::Vec2;

void CanonicalGrid::validate() const {
  require(length_px >= 2 && halfwidth_px >= 1 && step > 0.0, ErrorCode::kInvalidArgument,
          "canonical grid needs length >= 2, halfwidth >= 1 and a positive step");
}

Straightened straighten_with_mask(const ImageGrid& image, const Centerline& cl,
                                  const ImageGrid& mask, const CanonicalGrid& grid) {
  grid.validate();
  require(image.same_dims(mask), ErrorCode::kShapeMismatch, "image and mask sizes differ");
  require(mask.count_nonzero() > 0, ErrorCode::kEmptyMask, "cannot straighten an empty mask");
  require(cl.size() >= 2, ErrorCode::kDegenerateGeometry, "centerline too short");

  Straightened out{ImageGrid(grid.rows(), grid.length_px),
                   ImageGrid(grid.rows(), grid.length_px)};
  const double length = cl.length();
  for (int c = 0; c < grid.length_px; ++c) {
    const double u = c * grid.step;
    if (u > length) break;
    const geometry::Frame f = cl.frame_at(u);
    for (int r = 0; r < grid.rows(); ++r) {
      const double v = r - grid.halfwidth_px;
      const Vec2 p = f.point + f.normal * v;
      const int pr = static_cast<int>(std::lround(p.y));
      const int pc = static_cast<int>(std::lround(p.x));
      if (!mask.contains(pr, pc) || mask.at(pr, pc) == 0.0) continue;
      out.image.at(r, c) = sample_bilinear(image, p.y, p.x);
      out.mask.at(r, c) = 1.0;
    }
  }
  return out;
}

ImageGrid straighten(const ImageGrid& image, const Centerline& cl, const ImageGrid& mask,
                     const CanonicalGrid& grid) {
  return straighten_with_mask(image, cl, mask, grid).image;
}

namespace {

double mean_u_near(Vec2 end, const ImageGrid& u_field, const ImageGrid& mask, double radius) {
  const int r0 = static_cast<int>(std::floor(end.y - radius));
  const int r1 = static_cast<int>(std::ceil(end.y + radius));
  const int c0 = static_cast<int>(std::floor(end.x - radius));
  const int c1 = static_cast<int>(std::ceil(end.x + radius));
  double sum = 0.0;
  int n = 0;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (!mask.contains(r, c) || mask.at(r, c) == 0.0) continue;
      const double dy = r - end.y;
      const double dx = c - end.x;
      if (dx * dx + dy * dy > radius * radius) continue;
      sum += u_field.at(r, c);
      ++n;
    }
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

Centerline orient_head_tail(const Centerline& cl, const ImageGrid& u_field,
                            const ImageGrid& mask, double radius) {
  require(u_field.same_dims(mask), ErrorCode::kShapeMismatch, "U field and mask sizes differ");
  require(cl.size() >= 2, ErrorCode::kDegenerateGeometry, "centerline too short");
  const double u_first = mean_u_near(cl.points.front(), u_field, mask, radius);
  const double u_last = mean_u_near(cl.points.back(), u_field, mask, radius);
  const double diff = u_last - u_first;
  require(std::isfinite(diff) && std::abs(diff) >= 0.05 * cl.length(),
          ErrorCode::kAmbiguousOrientation,
          "head/tail orientation is ambiguous (U difference between ends too small)");
  return diff > 0.0 ? cl : cl.reversed();
}

Centerline centerline_from_uv(const ImageGrid& u_field, const ImageGrid& v_field,
                              const ImageGrid& mask, int n_points) {
  require(u_field.same_dims(mask) && v_field.same_dims(mask), ErrorCode::kShapeMismatch,
          "UV fields and mask sizes differ");
  require(mask.count_nonzero() > 0, ErrorCode::kEmptyMask, "no mask pixels for ridge");

  double u_max = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0) u_max = std::max(u_max, u_field[i]);
  const int bins = static_cast<int>(std::floor(std::max(u_max, 0.0))) + 1;
  std::vector<double> best_v(bins, -std::numeric_limits<double>::infinity());
  std::vector<Vec2> best_p(bins);
  const int w = mask.width();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const int b = std::clamp(static_cast<int>(std::lround(u_field[i])), 0, bins - 1);
    if (v_field[i] > best_v[b]) {
      best_v[b] = v_field[i];
      best_p[b] = {static_cast<double>(i % w), static_cast<double>(i / w)};
    }
  }
  std::vector<Vec2> ridge;
  for (int b = 0; b < bins; ++b)
    if (std::isfinite(best_v[b])) ridge.push_back(best_p[b]);
  require(ridge.size() >= 2, ErrorCode::kDegenerateGeometry,
          "ridge extraction found fewer than two points");

  std::vector<Vec2> smooth(ridge.size());
  const int n = static_cast<int>(ridge.size());
  for (int i = 0; i < n; ++i) {
    Vec2 acc{};
    int k = 0;
    for (int j = std::max(0, i - 2); j <= std::min(n - 1, i + 2); ++j, ++k) acc = acc + ridge[j];
    smooth[i] = acc * (1.0 / k);
  }
  return geometry::resample_arclength(smooth, n_points);
}

}  // namespace celeganser::straightening
