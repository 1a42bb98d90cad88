#pragma once

#include "celeganser/geometry.hpp"
#include "celeganser/image.hpp"

namespace celeganser::straightening {

/// Canonical worm frame: columns run along U, rows across V.
struct CanonicalGrid {
  int length_px = 128;
  int halfwidth_px = 12;  // output height is 2 * halfwidth_px + 1
  double step = 1.0;      // px of arc length per column

  int rows() const { return 2 * halfwidth_px + 1; }
  void validate() const;
};

struct Straightened {
  ImageGrid image;
  ImageGrid mask;  // canonical cells that map inside the source mask
};

/// Inverse warp: cell (r, c) samples the image bilinearly at
/// cl(u) + v * n(u) with u = c * step and v = r - halfwidth. Cells whose source
/// falls outside the mask, the image, or past the head are 0.
Straightened straighten_with_mask(const ImageGrid& image, const geometry::Centerline& cl,
                                  const ImageGrid& mask, const CanonicalGrid& grid);

ImageGrid straighten(const ImageGrid& image, const geometry::Centerline& cl,
                     const ImageGrid& mask, const CanonicalGrid& grid);

/// Reverses `cl` if needed so the U field grows from its first to its last
/// point. U is read as the mean over mask pixels within `radius` of each end.
/// Throws kAmbiguousOrientation when the two ends differ by less than
/// 5% of the centerline length.
geometry::Centerline orient_head_tail(const geometry::Centerline& cl,
                                      const ImageGrid& u_field, const ImageGrid& mask,
                                      double radius = 3.0);

/// Centerline recovered from a side-to-centerline V field: for every integer
/// U bin the mask pixel with the largest V is a ridge point. Ridge points are
/// ordered by U, smoothed with a 5-tap moving average, and resampled.
geometry::Centerline centerline_from_uv(const ImageGrid& u_field, const ImageGrid& v_field,
                                        const ImageGrid& mask, int n_points = 256);

}  // namespace celeganser::straightening
