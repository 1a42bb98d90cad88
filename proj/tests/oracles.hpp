#pragma once

// Slow, obviously-correct reference computations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "celeganser/geometry.hpp"
#include "celeganser/image.hpp"

namespace oracle {

using celeganser::ImageGrid;
using celeganser::geometry::Centerline;

/// Nearest background pixel center by exhaustive scan; cells outside the grid
/// are background.
inline ImageGrid brute_force_edt(const ImageGrid& mask) {
  const int h = mask.height(), w = mask.width();
  ImageGrid out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (mask.at(r, c) == 0.0) continue;
      double best = std::numeric_limits<double>::infinity();
      for (int rr = -1; rr <= h; ++rr)
        for (int cc = -1; cc <= w; ++cc) {
          const bool inside = rr >= 0 && cc >= 0 && rr < h && cc < w;
          if (inside && mask.at(rr, cc) != 0.0) continue;
          best = std::min(best, std::hypot(double(rr - r), double(cc - c)));
        }
      out.at(r, c) = best;
    }
  return out;
}

inline double brute_force_u(const Centerline& cl, double row, double col) {
  double best = std::numeric_limits<double>::infinity();
  double u = 0.0;
  for (std::size_t i = 0; i < cl.size(); ++i) {
    const double d = std::hypot(cl.points[i].x - col, cl.points[i].y - row);
    if (d < best) {
      best = d;
      u = cl.arclen[i];
    }
  }
  return u;
}

/// Random blobby binary mask: a union of discs and rectangles.
inline ImageGrid random_mask(std::uint64_t seed, int h, int w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ImageGrid m(h, w);
  const int shapes = 1 + static_cast<int>(uni(rng) * 5);
  for (int s = 0; s < shapes; ++s) {
    const double cy = uni(rng) * h, cx = uni(rng) * w;
    const double a = 1.0 + uni(rng) * h / 3.0, b = 1.0 + uni(rng) * w / 3.0;
    const bool disc = uni(rng) < 0.5;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double dy = (r - cy) / a, dx = (c - cx) / b;
        const bool in = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (in) m.at(r, c) = 1.0;
      }
  }
  return m;
}

/// Horizontal bar of rows [top, bottom] and columns [left, right].
inline ImageGrid bar_mask(int h, int w, int top, int bottom, int left, int right) {
  ImageGrid m(h, w);
  for (int r = top; r <= bottom; ++r)
    for (int c = left; c <= right; ++c) m.at(r, c) = 1.0;
  return m;
}

inline std::vector<celeganser::geometry::Vec2> straight_polyline(double x0, double x1, double y) {
  return {{x0, y}, {x1, y}};
}

/// Central difference of a scalar function.
template <typename F>
double central_difference(F f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
