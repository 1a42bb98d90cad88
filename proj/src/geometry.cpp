#include "celeganser/geometry.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "celeganser/error.hpp"

namespace celeganser::geometry {

namespace {

Vec2 unit(Vec2 v) {
  const double n = norm(v);
  return n > 0.0 ? v * (1.0 / n) : Vec2{1.0, 0.0};
}

void fill_frames(Centerline& cl) {
  const std::size_t n = cl.points.size();
  cl.tangents.resize(n);
  cl.normals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = cl.points[i == 0 ? 0 : i - 1];
    const Vec2 b = cl.points[i + 1 == n ? n - 1 : i + 1];
    cl.tangents[i] = unit(b - a);
    cl.normals[i] = perp(cl.tangents[i]);
  }
}

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas rooted at each sample).
void squared_dt_1d(std::span<const double> f, std::span<double> d,
                   std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (f[v[k]] == kInf) {
      v[k] = q;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (f[v[0]] == kInf) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

Frame Centerline::frame_at(double s) const {
  require(points.size() >= 2, ErrorCode::kDegenerateGeometry,
          "centerline needs at least two points");
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(arclen.begin(), arclen.end(), s);
  std::size_t hi = static_cast<std::size_t>(it - arclen.begin());
  hi = std::clamp<std::size_t>(hi, 1, points.size() - 1);
  const std::size_t lo = hi - 1;
  const double span = arclen[hi] - arclen[lo];
  const double t = span > 0.0 ? (s - arclen[lo]) / span : 0.0;
  Frame f;
  f.point = points[lo] * (1.0 - t) + points[hi] * t;
  f.tangent = unit(tangents[lo] * (1.0 - t) + tangents[hi] * t);
  f.normal = perp(f.tangent);
  return f;
}

Centerline Centerline::reversed() const {
  Centerline out;
  const std::size_t n = points.size();
  out.points.assign(points.rbegin(), points.rend());
  out.arclen.resize(n);
  out.tangents.resize(n);
  out.normals.resize(n);
  const double total = length();
  for (std::size_t i = 0; i < n; ++i) {
    out.arclen[i] = total - arclen[n - 1 - i];
    out.tangents[i] = tangents[n - 1 - i] * -1.0;
    out.normals[i] = perp(out.tangents[i]);
  }
  out.arclen.front() = 0.0;
  return out;
}

Centerline Centerline::translated(Vec2 offset) const {
  Centerline out = *this;
  for (Vec2& p : out.points) p = p + offset;
  return out;
}

Centerline resample_arclength(std::span<const Vec2> polyline, int n) {
  require(n >= 2, ErrorCode::kInvalidArgument, "resample count must be >= 2");
  require(polyline.size() >= 2, ErrorCode::kDegenerateGeometry,
          "polyline needs at least two points");
  std::vector<double> cum(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i)
    cum[i] = cum[i - 1] + norm(polyline[i] - polyline[i - 1]);
  const double total = cum.back();
  require(total > 0.0, ErrorCode::kDegenerateGeometry,
          "polyline has zero total length");

  Centerline cl;
  cl.points.resize(n);
  cl.arclen.resize(n);
  std::size_t seg = 1;
  for (int k = 0; k < n; ++k) {
    const double s = total * k / (n - 1);
    while (seg + 1 < polyline.size() && cum[seg] < s) ++seg;
    const double span = cum[seg] - cum[seg - 1];
    const double t = span > 0.0 ? std::clamp((s - cum[seg - 1]) / span, 0.0, 1.0) : 0.0;
    cl.points[k] = polyline[seg - 1] * (1.0 - t) + polyline[seg] * t;
    cl.arclen[k] = s;
  }
  cl.points.front() = polyline.front();
  cl.points.back() = polyline.back();
  fill_frames(cl);
  return cl;
}

ImageGrid distance_to_boundary(const ImageGrid& mask) {
  const int h = mask.height();
  const int w = mask.width();
  // One ring of virtual background around the grid.
  const int ph = h + 2;
  const int pw = w + 2;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(ph) * pw, 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (mask.at(r, c) != 0.0) grid[(r + 1) * pw + (c + 1)] = kInf;

#pragma omp parallel
  {
    std::vector<double> f(ph), d(ph);
    std::vector<int> v;
    std::vector<double> z;
#pragma omp for schedule(static)
    for (int c = 0; c < pw; ++c) {
      for (int r = 0; r < ph; ++r) f[r] = grid[r * pw + c];
      squared_dt_1d(f, d, v, z);
      for (int r = 0; r < ph; ++r) grid[r * pw + c] = d[r];
    }
  }
#pragma omp parallel
  {
    std::vector<double> f(pw), d(pw);
    std::vector<int> v;
    std::vector<double> z;
#pragma omp for schedule(static)
    for (int r = 0; r < ph; ++r) {
      std::copy_n(grid.begin() + r * pw, pw, f.begin());
      squared_dt_1d(f, d, v, z);
      std::copy_n(d.begin(), pw, grid.begin() + r * pw);
    }
  }

  ImageGrid out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.at(r, c) = std::sqrt(grid[(r + 1) * pw + (c + 1)]);
  return out;
}

std::vector<int> nearest_centerline_index(const ImageGrid& mask, const Centerline& cl) {
  require(cl.size() >= 2, ErrorCode::kDegenerateGeometry,
          "centerline needs at least two points");
  const int h = mask.height();
  const int w = mask.width();
  std::vector<int> nearest(static_cast<std::size_t>(h) * w, -1);
  const int n = static_cast<int>(cl.size());
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (mask.at(r, c) == 0.0) continue;
      const Vec2 p{static_cast<double>(c), static_cast<double>(r)};
      int best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < n; ++k) {
        const Vec2 d = p - cl.points[k];
        const double d2 = dot(d, d);
        if (d2 < best_d2) {
          best_d2 = d2;
          best = k;
        }
      }
      nearest[static_cast<std::size_t>(r) * w + c] = best;
    }
  }
  return nearest;
}

ImageGrid compute_u_field(const ImageGrid& mask, const Centerline& cl) {
  require(mask.count_nonzero() > 0, ErrorCode::kEmptyMask, "U field of an empty mask");
  const std::vector<int> nearest = nearest_centerline_index(mask, cl);
  ImageGrid u(mask.height(), mask.width());
  for (std::size_t i = 0; i < nearest.size(); ++i)
    if (nearest[i] >= 0) u[i] = cl.arclen[nearest[i]];
  return u;
}

std::string_view representation_name(VRepresentation rep) {
  switch (rep) {
    case VRepresentation::LeftToRight: return "left_to_right";
    case VRepresentation::CenterlineToSide: return "centerline_to_side";
    case VRepresentation::SideToCenterline: return "side_to_centerline";
  }
  return "unknown";
}

VRepresentation parse_representation(std::string_view name) {
  for (VRepresentation rep : {VRepresentation::LeftToRight,
                              VRepresentation::CenterlineToSide,
                              VRepresentation::SideToCenterline}) {
    if (representation_name(rep) == name) return rep;
  }
  fail(ErrorCode::kInvalidArgument,
       "unknown V representation '" + std::string(name) + "'");
}

VRepresentation representation_from_int(int code) {
  require(code >= 0 && code <= 2, ErrorCode::kInvalidArgument,
          "unknown V representation code " + std::to_string(code));
  return static_cast<VRepresentation>(code);
}

std::vector<double> local_half_widths(const ImageGrid& mask, const Centerline& cl) {
  const ImageGrid dist = distance_to_boundary(mask);
  std::vector<double> hw(cl.size());
  for (std::size_t k = 0; k < cl.size(); ++k) {
    const double d = sample_bilinear(dist, cl.points[k].y, cl.points[k].x);
    hw[k] = std::max(d - 0.5, 0.0);
  }
  return hw;
}

ImageGrid compute_v_field(const ImageGrid& mask, const Centerline& cl,
                          VRepresentation mode, std::optional<double> v_max) {
  require(mask.count_nonzero() > 0, ErrorCode::kEmptyMask, "V field of an empty mask");
  if (mode == VRepresentation::SideToCenterline) return distance_to_boundary(mask);
  require(mode == VRepresentation::LeftToRight ||
              mode == VRepresentation::CenterlineToSide,
          ErrorCode::kInvalidArgument, "unknown V representation");

  const std::vector<double> hw = local_half_widths(mask, cl);
  const std::vector<int> nearest = nearest_centerline_index(mask, cl);
  const double vmax = v_max.value_or(*std::max_element(hw.begin(), hw.end()));
  ImageGrid v(mask.height(), mask.width());
  const int w = mask.width();
  for (std::size_t i = 0; i < nearest.size(); ++i) {
    const int k = nearest[i];
    if (k < 0) continue;
    const Vec2 p{static_cast<double>(i % w), static_cast<double>(i / w)};
    const Vec2 off = p - cl.points[k];
    const double dist = norm(off);
    const double side = cross(cl.tangents[k], off) < 0.0 ? -1.0 : 1.0;
    if (mode == VRepresentation::LeftToRight) {
      v[i] = std::clamp(side * dist + hw[k], 0.0, 2.0 * hw[k]);
    } else {
      v[i] = hw[k] > 0.0 ? std::clamp(vmax * (1.0 - dist / hw[k]), 0.0, vmax) : 0.0;
    }
  }
  return v;
}

UVField build_uv_field(const ImageGrid& mask, const Centerline& cl,
                       VRepresentation mode) {
  require(mask.is_binary(), ErrorCode::kInvalidArgument, "mask must be binary");
  UVField uv;
  uv.u = compute_u_field(mask, cl);
  uv.v = compute_v_field(mask, cl, mode);
  uv.valid = mask;
  uv.representation = mode;
  return uv;
}

ImageGrid to_percent_body_length(const ImageGrid& u, double body_length) {
  require(body_length > 0.0, ErrorCode::kInvalidArgument, "body length must be positive");
  ImageGrid out = u;
  for (double& x : out.data()) x = 100.0 * x / body_length;
  return out;
}

}  // namespace celeganser::geometry
