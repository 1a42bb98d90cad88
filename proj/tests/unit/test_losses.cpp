#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "celeganser/ad/ops.hpp"
#include "celeganser/error.hpp"
#include "celeganser/losses.hpp"
#include "oracles.hpp"

namespace {

using namespace celeganser;
using namespace celeganser::losses;
using Td = ad::Tensor<double>;

Td t4(std::vector<double> v, bool grad = false) {
  const int n = static_cast<int>(v.size());
  return Td::from_vector({1, 1, 1, n}, std::move(v), grad);
}

std::vector<Td> scales_of(double value, int s_count, int side = 8) {
  std::vector<Td> out;
  for (int s = 0; s < s_count; ++s) out.push_back(Td::full({1, 1, side >> s, side >> s}, value));
  return out;
}

TEST(MultiscaleBce, PerfectPredictionNearZero) {
  std::vector<Td> x, y;
  for (int s = 0; s < 5; ++s) {
    const int side = 16 >> s;
    std::vector<double> yv(side * side), xv(side * side);
    for (int i = 0; i < side * side; ++i) {
      yv[i] = (i % 3 == 0) ? 1.0 : 0.0;
      xv[i] = yv[i];
    }
    y.push_back(Td::from_vector({1, 1, side, side}, yv));
    x.push_back(Td::from_vector({1, 1, side, side}, xv));
  }
  const double l = multiscale_bce<double>(x, y).item();
  EXPECT_GE(l, 0.0);
  EXPECT_LE(l, 5 * 1.2e-6);
}

TEST(MultiscaleBce, HalfEverywhereIsSLn2) {
  const double l = multiscale_bce<double>(scales_of(0.5, 5, 16), scales_of(1.0, 5, 16)).item();
  EXPECT_NEAR(l, 5.0 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(l, 3.4657, 1e-4);
}

TEST(MultiscaleBce, TwoPixelExample) {
  const double l = multiscale_bce<double>({t4({0.8, 0.4})}, {t4({1.0, 0.0})}).item();
  EXPECT_NEAR(l, -(std::log(0.8) + std::log(0.6)) / 2.0, 1e-12);
  EXPECT_NEAR(l, 0.3670, 1e-4);
}

TEST(MultiscaleBce, MonotoneTowardTarget) {
  double prev = std::numeric_limits<double>::infinity();
  for (double x = 0.05; x < 1.0; x += 0.05) {
    const double l = multiscale_bce<double>({t4({x, 1.0 - x})}, {t4({1.0, 0.0})}).item();
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(MultiscaleBce, ShapeMismatchThrows) {
  EXPECT_THROW(multiscale_bce<double>({t4({0.5})}, {t4({1.0, 0.0})}), Error);
  EXPECT_THROW(multiscale_bce<double>(scales_of(0.5, 2), scales_of(1.0, 3)), Error);
}

TEST(MultiscaleBce, LogitsFormMatchesProbabilityForm) {
  const std::vector<double> z{-3.0, -0.2, 0.0, 1.5, 4.0};
  std::vector<double> p;
  for (double v : z) p.push_back(1.0 / (1.0 + std::exp(-v)));
  const Td y = t4({1, 0, 1, 0, 1});
  EXPECT_NEAR(multiscale_bce_with_logits<double>({t4(z)}, {y}).item(), multiscale_bce<double>({t4(p)}, {y}).item(),
              1e-12);
}

TEST(MultiscaleBce, LogitsGradientIsSigmoidMinusTarget) {
  Td z = t4({-1.0, 2.0}, true);
  ad::backward(multiscale_bce_with_logits<double>({z}, {t4({1.0, 0.0})}));
  EXPECT_NEAR(z.grad()[0], (1.0 / (1.0 + std::exp(1.0)) - 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(z.grad()[1], (1.0 / (1.0 + std::exp(-2.0))) / 2.0, 1e-12);
}

TEST(MaskedL1, HandExample) {
  const Td l = masked_l1<double>({t4({1, 2, 3})}, {t4({0, 0, 0})}, {t4({1, 1, 1})}, 0.0);
  EXPECT_DOUBLE_EQ(l.item(), 2.0);
}

TEST(MaskedL1, DeltaAddedOnceToNormalizer) {
  const Td l = masked_l1<double>({t4({1, 2, 3}), t4({4})}, {t4({0, 0, 0}), t4({0})},
                         {t4({1, 1, 1}), t4({1})}, 1.0);
  EXPECT_DOUBLE_EQ(l.item(), 10.0 / 5.0);
}

TEST(MaskedL1, ZeroMaskAndPerfectPrediction) {
  EXPECT_EQ(masked_l1<double>({t4({1, 2})}, {t4({5, 5})}, {t4({0, 0})}).item(), 0.0);
  EXPECT_EQ(masked_l1<double>({t4({1, 2})}, {t4({5, 5})}, {t4({0, 0})}, 0.0).item(), 0.0);
  EXPECT_EQ(masked_l1<double>({t4({1, 2})}, {t4({1, 2})}, {t4({0.3, 1})}).item(), 0.0);
}

TEST(MaskedL1, WeightsOutsideUnitIntervalRejected) {
  EXPECT_THROW(masked_l1<double>({t4({1})}, {t4({0})}, {t4({1.5})}), Error);
}

TEST(MaskedL1, GradientIsMaskSignOverNormalizer) {
  Td u = t4({1.0, -2.0, 0.5, 3.0}, true);
  const Td g = t4({0.0, 0.0, 1.0, 1.0});
  const Td m = t4({0.5, 1.0, 0.25, 0.0}, true);
  ad::backward(masked_l1<double>({u}, {g}, {m}, 1.0));
  const double norm = 0.5 + 1.0 + 0.25 + 0.0 + 1.0;
  const double expected[] = {0.5 / norm, -1.0 / norm, -0.25 / norm, 0.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(u.grad()[i], expected[i], 1e-12);
  for (double v : m.grad()) EXPECT_EQ(v, 0.0);  // weights are constants
  // Finite differences agree away from kinks.
  for (int i = 0; i < 4; ++i) {
    auto f = [&](double x) {
      std::vector<double> vals(u.data().begin(), u.data().end());
      vals[i] = x;
      return masked_l1<double>({t4(vals)}, {g}, {m}, 1.0).item();
    };
    EXPECT_NEAR(oracle::central_difference(f, u.data()[i], 1e-6), expected[i], 1e-8);
  }
}

TEST(MaskedL1, DoublingMaskScalesRawNumerator) {
  const Td p = t4({1, -1, 2}), g = t4({0, 0, 0});
  const double a = masked_l1<double>({p}, {g}, {t4({0.1, 0.2, 0.3})}, 0.0, false).item();
  const double b = masked_l1<double>({p}, {g}, {t4({0.2, 0.4, 0.6})}, 0.0, false).item();
  EXPECT_NEAR(b, 2.0 * a, 1e-12);
  const double zero = masked_l1<double>({g}, {g}, {t4({1, 1, 1})}, 0.0, false).item();
  EXPECT_EQ(zero, 0.0);
}

TEST(MaskedL1Uv, BothTermsFromTargets) {
  MultiScaleTarget<double> tgt;
  tgt.u = {t4({1, 1})};
  tgt.v = {t4({0, 2})};
  const UVLoss<double> l = masked_l1_uv<double>({t4({2, 3})}, {t4({0, 2})}, {t4({1, 1})}, tgt, 0.0);
  EXPECT_DOUBLE_EQ(l.l_u.item(), 1.5);
  EXPECT_DOUBLE_EQ(l.l_v.item(), 0.0);
}

TEST(TotalReg, UnweightedSum) {
  EXPECT_DOUBLE_EQ(total_reg_loss(Td::scalar(2), Td::scalar(3), Td::scalar(0.5)).item(), 5.5);
  EXPECT_DOUBLE_EQ(total_reg_loss(Td::scalar(0), Td::scalar(0), Td::scalar(0)).item(), 0.0);
}

TEST(TotalReg, NonFiniteRejected) {
  try {
    total_reg_loss(Td::scalar(std::nan("")), Td::scalar(0), Td::scalar(0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFinite);
  }
}

TEST(TotalReg, GradientOfSumIsSumOfGradients) {
  Td u = t4({1.0, -1.0}, true), z = t4({0.3, -0.7}, true);
  const Td g = t4({0, 0}), m = t4({1, 1}), y = t4({1, 0});
  ad::backward(total_reg_loss(masked_l1<double>({u}, {g}, {m}), masked_l1<double>({u}, {g}, {m}),
                              multiscale_bce_with_logits<double>({z}, {y})));
  std::vector<double> combined(u.grad().begin(), u.grad().end());
  std::vector<double> zc(z.grad().begin(), z.grad().end());
  Td u2 = t4({1.0, -1.0}, true), z2 = t4({0.3, -0.7}, true);
  ad::backward(masked_l1<double>({u2}, {g}, {m}));
  ad::backward(masked_l1<double>({u2}, {g}, {m}));
  ad::backward(multiscale_bce_with_logits<double>({z2}, {y}));
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(combined[i], u2.grad()[i], 1e-15);
    EXPECT_NEAR(zc[i], z2.grad()[i], 1e-15);
  }
}

TEST(AgeL1, Examples) {
  const Td a = Td::from_vector({2}, {100, 200});
  EXPECT_EQ(age_l1(a, a).item(), 0.0);
  EXPECT_DOUBLE_EQ(age_l1(Td::from_vector({2}, {110, 190}), a).item(), 10.0);
  EXPECT_DOUBLE_EQ(age_l1(Td::from_vector({1}, {285.5}), Td::from_vector({1}, {300})).item(), 14.5);
}

TEST(AgeL1, EmptyBatchRejected) {
  EXPECT_THROW(age_l1(Td::from_vector({0}, {}), Td::from_vector({0}, {})), Error);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(6), y(6), m(6), p(6);
    for (int i = 0; i < 6; ++i) {
      x[i] = u(rng);
      y[i] = u(rng) < 0.5 ? 0.0 : 1.0;
      m[i] = u(rng);
      p[i] = 10 * u(rng) - 5;
    }
    EXPECT_GE(multiscale_bce<double>({t4(x)}, {t4(y)}).item(), 0.0);
    EXPECT_GE(masked_l1<double>({t4(p)}, {t4(x)}, {t4(m)}).item(), 0.0);
    EXPECT_GE(age_l1(Td::from_vector({6}, p), Td::from_vector({6}, x)).item(), 0.0);
  }
}

TEST(MultiScaleTarget, MajorityMasksAndForegroundMeans) {
  ImageGrid mask(4, 4), uf(4, 4), vf(4, 4, 9.0);
  // Top-left 2x2 cell: 3 foreground pixels with U = 1, 2, 3.
  mask.at(0, 0) = mask.at(0, 1) = mask.at(1, 0) = 1.0;
  uf.at(0, 0) = 1;
  uf.at(0, 1) = 2;
  uf.at(1, 0) = 3;
  uf.at(1, 1) = 100;
  // Bottom-right cell: one foreground pixel (below majority).
  mask.at(3, 3) = 1.0;
  uf.at(3, 3) = 7;
  const auto t = make_multiscale_target<double>({&mask}, {&uf}, {&vf}, 3);
  ASSERT_EQ(t.mask.size(), 3u);
  EXPECT_EQ(t.mask[1].shape(), (ad::Shape{1, 1, 2, 2}));
  EXPECT_EQ(t.mask[1].data()[0], 1.0);
  EXPECT_EQ(t.mask[1].data()[3], 0.0);
  EXPECT_DOUBLE_EQ(t.u[1].data()[0], 2.0);
  EXPECT_DOUBLE_EQ(t.u[1].data()[3], 7.0);
  EXPECT_EQ(t.u[1].data()[1], 0.0);
  EXPECT_EQ(t.mask[2].shape(), (ad::Shape{1, 1, 1, 1}));
  EXPECT_EQ(t.mask[2].data()[0], 0.0);  // 4 of 16 foreground
}

}  // namespace
