#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "celeganser/image.hpp"

namespace celeganser::geometry {

/// 2-D position in pixel units; x is the column axis, y the row axis.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
/// Rotation by +90 degrees.
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

struct Frame {
  Vec2 point;
  Vec2 tangent;
  Vec2 normal;
};

/// Arc-length parameterized medial curve, tail first.
struct Centerline {
  std::vector<Vec2> points;
  std::vector<double> arclen;  // 0 at the tail, strictly increasing
  std::vector<Vec2> tangents;  // unit
  std::vector<Vec2> normals;   // tangent rotated +90 degrees

  std::size_t size() const { return points.size(); }
  double length() const { return arclen.empty() ? 0.0 : arclen.back(); }

  /// Position and unit frame at arc length s (clamped to [0, length]).
  Frame frame_at(double s) const;
  /// Head becomes tail. Arc lengths are re-measured from the new tail and the
  /// frame flips so the normal stays tangent rotated +90 degrees.
  Centerline reversed() const;
  Centerline translated(Vec2 offset) const;
};

/// Resample a polyline to n points equally spaced in arc length. Tangents use
/// central differences, one-sided at the ends. Throws on zero total length.
Centerline resample_arclength(std::span<const Vec2> polyline, int n);

/// Exact Euclidean distance from each pixel center to the nearest background
/// pixel center. Pixels outside the grid count as background, so foreground
/// touching the border is at distance 1 from it. Background pixels are 0.
ImageGrid distance_to_boundary(const ImageGrid& mask);

/// Index of the nearest centerline sample for each mask pixel (-1 elsewhere).
std::vector<int> nearest_centerline_index(const ImageGrid& mask, const Centerline& cl);

/// Arc length of the nearest centerline sample at every mask pixel, 0 off-mask.
ImageGrid compute_u_field(const ImageGrid& mask, const Centerline& cl);

enum class VRepresentation { LeftToRight, CenterlineToSide, SideToCenterline };

std::string_view representation_name(VRepresentation rep);
/// Throws kInvalidArgument on an unknown name.
VRepresentation parse_representation(std::string_view name);
/// Throws kInvalidArgument if `code` is not a valid enumerator.
VRepresentation representation_from_int(int code);

/// Local half-width at each centerline sample: the boundary distance at the
/// sample minus half a pixel (boundary sits between pixel centers).
std::vector<double> local_half_widths(const ImageGrid& mask, const Centerline& cl);

/// v_max only matters for CenterlineToSide; it defaults to the worm's largest
/// local half-width.
ImageGrid compute_v_field(const ImageGrid& mask, const Centerline& cl,
                          VRepresentation mode,
                          std::optional<double> v_max = std::nullopt);

struct UVField {
  ImageGrid u;
  ImageGrid v;
  ImageGrid valid;
  VRepresentation representation = VRepresentation::SideToCenterline;
};

UVField build_uv_field(const ImageGrid& mask, const Centerline& cl,
                       VRepresentation mode = VRepresentation::SideToCenterline);

/// U in percent of body length (0 at tail, 100 at head).
ImageGrid to_percent_body_length(const ImageGrid& u, double body_length);

}  // namespace celeganser::geometry
