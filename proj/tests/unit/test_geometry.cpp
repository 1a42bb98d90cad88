#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "celeganser/error.hpp"
#include "celeganser/geometry.hpp"
#include "oracles.hpp"

namespace {

using namespace celeganser;
using namespace celeganser::geometry;

Centerline straight_centerline(double x0, double x1, double y, int n) {
  const auto poly = oracle::straight_polyline(x0, x1, y);
  return resample_arclength(poly, n);
}

TEST(Resample, StraightSegmentElevenPoints) {
  const std::vector<Vec2> poly{{0, 0}, {100, 0}};
  const Centerline cl = resample_arclength(poly, 11);
  ASSERT_EQ(cl.size(), 11u);
  for (int k = 0; k < 11; ++k) {
    EXPECT_NEAR(cl.points[k].x, 10.0 * k, 1e-12);
    EXPECT_NEAR(cl.points[k].y, 0.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(cl.length(), 100.0);
}

TEST(Resample, SemicircleLength) {
  std::vector<Vec2> poly;
  for (int i = 0; i < 1000; ++i) {
    const double t = std::numbers::pi * i / 999.0;
    poly.push_back({50.0 * std::cos(t), 50.0 * std::sin(t)});
  }
  const Centerline cl = resample_arclength(poly, 256);
  EXPECT_NEAR(cl.length(), 50.0 * std::numbers::pi, 50.0 * std::numbers::pi * 1e-3);
}

TEST(Resample, UniformInputIsAFixedPoint) {
  std::vector<Vec2> poly;
  for (int i = 0; i <= 20; ++i) poly.push_back({3.0 * i, -2.0 * i});
  const Centerline cl = resample_arclength(poly, 21);
  for (int i = 0; i <= 20; ++i) {
    EXPECT_NEAR(cl.points[i].x, poly[i].x, 1e-6);
    EXPECT_NEAR(cl.points[i].y, poly[i].y, 1e-6);
  }
}

TEST(Resample, DegenerateInputThrows) {
  const std::vector<Vec2> poly{{5, 5}, {5, 5}, {5, 5}};
  try {
    resample_arclength(poly, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
}

TEST(Resample, FrameInvariants) {
  std::vector<Vec2> poly;
  for (int i = 0; i < 200; ++i) {
    const double t = i / 199.0 * 3.0;
    poly.push_back({40.0 * t, 20.0 * std::sin(2.0 * t)});
  }
  const Centerline cl = resample_arclength(poly, 128);
  EXPECT_EQ(cl.arclen.front(), 0.0);
  for (std::size_t i = 0; i < cl.size(); ++i) {
    if (i) EXPECT_GT(cl.arclen[i], cl.arclen[i - 1]);
    EXPECT_NEAR(norm(cl.tangents[i]), 1.0, 1e-9);
    EXPECT_NEAR(norm(cl.normals[i]), 1.0, 1e-9);
    EXPECT_NEAR(cl.normals[i].x, -cl.tangents[i].y, 1e-12);
    EXPECT_NEAR(cl.normals[i].y, cl.tangents[i].x, 1e-12);
  }
}

TEST(Centerline, ReversedSwapsEndsAndKeepsFrameConvention) {
  const Centerline cl = straight_centerline(0, 50, 3, 51);
  const Centerline r = cl.reversed();
  EXPECT_EQ(r.points.front(), cl.points.back());
  EXPECT_EQ(r.points.back(), cl.points.front());
  EXPECT_EQ(r.arclen.front(), 0.0);
  EXPECT_DOUBLE_EQ(r.length(), cl.length());
  EXPECT_NEAR(r.tangents[10].x, -1.0, 1e-12);
  EXPECT_NEAR(r.normals[10].y, -1.0, 1e-12);
}

TEST(DistanceTransform, AllBackgroundIsZero) {
  const ImageGrid d = distance_to_boundary(ImageGrid(6, 9));
  for (double v : d.data()) EXPECT_EQ(v, 0.0);
}

TEST(DistanceTransform, ThreeByThreeBlock) {
  const ImageGrid m = oracle::bar_mask(7, 7, 2, 4, 2, 4);
  const ImageGrid d = distance_to_boundary(m);
  EXPECT_DOUBLE_EQ(d.at(3, 3), 2.0);
  EXPECT_DOUBLE_EQ(d.at(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(d.at(2, 3), 1.0);
  const ImageGrid bf = oracle::brute_force_edt(m);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(d[i], bf[i], 1e-12);
}

TEST(DistanceTransform, SinglePixel) {
  ImageGrid m(5, 5);
  m.at(2, 2) = 1.0;
  EXPECT_DOUBLE_EQ(distance_to_boundary(m).at(2, 2), 1.0);
}

TEST(DistanceTransform, GridEdgeCountsAsBackground) {
  const ImageGrid d = distance_to_boundary(ImageGrid(5, 5, 1.0));
  EXPECT_DOUBLE_EQ(d.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.at(2, 2), 3.0);
}

TEST(DistanceTransform, MatchesBruteForceOnRandomMasks) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int h = 8 + static_cast<int>(seed % 5) * 7;
    const int w = 10 + static_cast<int>(seed % 3) * 11;
    const ImageGrid m = oracle::random_mask(seed, h, w);
    const ImageGrid d = distance_to_boundary(m);
    const ImageGrid bf = oracle::brute_force_edt(m);
    for (std::size_t i = 0; i < m.size(); ++i) ASSERT_NEAR(d[i], bf[i], 1e-6) << "seed " << seed;
  }
}

class BarFixture : public ::testing::Test {
 protected:
  // Rows 20..30 (11 rows), columns 10..110; centerline on row 25.
  ImageGrid mask = oracle::bar_mask(50, 130, 20, 30, 10, 110);
  Centerline cl = straight_centerline(10, 110, 25, 101);
};

TEST_F(BarFixture, UIsColumnOffset) {
  const ImageGrid u = compute_u_field(mask, cl);
  for (int r = 20; r <= 30; ++r)
    for (int c = 10; c <= 110; ++c) EXPECT_NEAR(u.at(r, c), c - 10.0, 0.5);
  EXPECT_EQ(u.at(25, 10), 0.0);
  EXPECT_EQ(u.at(5, 5), 0.0);
}

TEST_F(BarFixture, UMatchesBruteForceNearestPoint) {
  const ImageGrid u = compute_u_field(mask, cl);
  for (int r = 20; r <= 30; r += 3)
    for (int c = 10; c <= 110; c += 7) EXPECT_EQ(u.at(r, c), oracle::brute_force_u(cl, r, c));
}

TEST_F(BarFixture, UBoundedByLength) {
  const ImageGrid u = compute_u_field(mask, cl);
  EXPECT_LE(u.max_value(), cl.length() + 0.5);
  for (double v : u.data()) EXPECT_GE(v, 0.0);
}

TEST_F(BarFixture, SideToCenterlineMatchesBruteForce) {
  const ImageGrid v = compute_v_field(mask, cl, VRepresentation::SideToCenterline);
  EXPECT_DOUBLE_EQ(v.at(20, 60), 1.0);
  EXPECT_DOUBLE_EQ(v.at(25, 60), 6.0);
  const ImageGrid bf = oracle::brute_force_edt(mask);
  for (std::size_t i = 0; i < mask.size(); ++i) EXPECT_NEAR(v[i], bf[i], 1e-6);
}

TEST_F(BarFixture, LeftToRightIncreasesAcrossTheBar) {
  const ImageGrid v = compute_v_field(mask, cl, VRepresentation::LeftToRight);
  for (int c = 15; c <= 105; c += 10) {
    for (int r = 21; r <= 30; ++r) EXPECT_GT(v.at(r, c), v.at(r - 1, c));
    EXPECT_NEAR(v.at(20, c), 0.0, 1.0);
    EXPECT_NEAR(v.at(30, c) - v.at(20, c), 10.0, 1.0);
  }
}

TEST_F(BarFixture, CenterlineToSideLinearProfile) {
  const ImageGrid v = compute_v_field(mask, cl, VRepresentation::CenterlineToSide, 5.0);
  // Continuous half thickness of an 11-row bar is 5.5 px.
  for (int c = 15; c <= 105; c += 10) {
    EXPECT_NEAR(v.at(25, c), 5.0, 1e-9);
    for (int r = 20; r <= 30; ++r) EXPECT_NEAR(v.at(r, c), 5.0 * (1.0 - std::abs(r - 25) / 5.5), 0.5);
    EXPECT_NEAR(v.at(20, c), 0.0, 0.5);
  }
}

TEST_F(BarFixture, UnknownRepresentationThrows) {
  EXPECT_THROW(compute_v_field(mask, cl, static_cast<VRepresentation>(7)), Error);
  EXPECT_THROW(representation_from_int(3), Error);
  EXPECT_THROW(parse_representation("diagonal"), Error);
  EXPECT_EQ(parse_representation("side_to_centerline"), VRepresentation::SideToCenterline);
}

TEST_F(BarFixture, EmptyMaskThrows) {
  try {
    compute_u_field(ImageGrid(50, 130), cl);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyMask);
  }
}

TEST_F(BarFixture, ULipschitzOnAdjacentPixels) {
  const ImageGrid u = compute_u_field(mask, cl);
  for (int r = 20; r <= 30; ++r)
    for (int c = 10; c < 110; ++c) {
      EXPECT_LE(std::abs(u.at(r, c + 1) - u.at(r, c)), 2.0);
      if (r < 30) EXPECT_LE(std::abs(u.at(r + 1, c) - u.at(r, c)), 2.0);
    }
}

TEST_F(BarFixture, AllModesVanishOnTheBoundary) {
  const ImageGrid s2c = compute_v_field(mask, cl, VRepresentation::SideToCenterline);
  const ImageGrid c2s = compute_v_field(mask, cl, VRepresentation::CenterlineToSide);
  const ImageGrid l2r = compute_v_field(mask, cl, VRepresentation::LeftToRight);
  for (int c = 15; c <= 105; ++c) {
    for (int r : {20, 30}) {
      EXPECT_LE(s2c.at(r, c), 1.0);
      EXPECT_LE(c2s.at(r, c), 1.0);
    }
    EXPECT_LE(l2r.at(20, c), 1.0);
  }
}

TEST(VField, TranslationInvariance) {
  const ImageGrid mask = oracle::bar_mask(40, 80, 10, 18, 5, 60);
  const Centerline cl = straight_centerline(5, 60, 14, 56);
  const ImageGrid moved = crop(mask, -7, -9, 40, 80);
  const Centerline cl_moved = cl.translated({9, 7});
  for (auto mode : {VRepresentation::SideToCenterline, VRepresentation::LeftToRight,
                    VRepresentation::CenterlineToSide}) {
    const ImageGrid a = compute_v_field(mask, cl, mode);
    const ImageGrid b = compute_v_field(moved, cl_moved, mode);
    for (int r = 0; r < 33; ++r)
      for (int c = 0; c < 71; ++c) EXPECT_NEAR(a.at(r, c), b.at(r + 7, c + 9), 1e-9);
  }
}

TEST(UVField, ValidEqualsMask) {
  const ImageGrid mask = oracle::bar_mask(30, 60, 10, 16, 5, 50);
  const Centerline cl = straight_centerline(5, 50, 13, 46);
  const UVField uv = build_uv_field(mask, cl);
  EXPECT_EQ(uv.valid, mask);
  EXPECT_EQ(uv.representation, VRepresentation::SideToCenterline);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0.0) EXPECT_GE(uv.v[i], 1.0);
}

TEST(UVField, PercentBodyLength) {
  ImageGrid u(1, 3, std::vector<double>{0, 25, 50});
  const ImageGrid p = to_percent_body_length(u, 50.0);
  EXPECT_DOUBLE_EQ(p[1], 50.0);
  EXPECT_DOUBLE_EQ(p[2], 100.0);
}

}  // namespace
