#include "celeganser/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "celeganser/ad/ops.hpp"
#include "celeganser/error.hpp"
#include "celeganser/losses.hpp"
#include "celeganser/models.hpp"

namespace celeganser::gradcheck {

using ad::Shape;
using ad::Tensor;
using T64 = Tensor<double>;

Result check(const std::string& name, std::vector<T64> inputs,
             const std::function<T64()>& loss, const Options& opt) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  ad::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  Result r;
  r.name = name;
  r.tolerance = opt.tolerance;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> idx(inputs[k].numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > opt.max_entries_per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_entries_per_tensor);
    }
    auto data = inputs[k].mutable_data();
    for (std::size_t i : idx) {
      const double saved = data[i];
      data[i] = saved + opt.h;
      const double plus = loss().item();
      data[i] = saved - opt.h;
      const double minus = loss().item();
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * opt.h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
      r.max_error = std::max(r.max_error, std::abs(a - numeric) / denom);
      ++r.checked;
    }
  }
  r.passed = r.max_error < opt.tolerance;
  return r;
}

namespace {

T64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = d(rng);
  return T64::from_vector(std::move(shape), std::move(v));
}

// Values bounded away from 0 so kinked ops stay differentiable under +-h.
T64 away_from_zero(Shape shape, std::mt19937_64& rng) {
  T64 t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (double& x : t.mutable_data())
    if (flip(rng)) x = -x;
  return t;
}

// Random projection to a scalar: catches errors a plain sum would cancel.
T64 project(const T64& out, const T64& weights) { return ad::sum(ad::mul(out, weights)); }

}  // namespace

std::vector<Result> standard_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Result> results;
  Options tight;
  tight.tolerance = 1e-4;
  tight.seed = seed;
  Options loose;
  loose.seed = seed;

  {
    T64 x = random_tensor({1, 2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng),
        b = random_tensor({3}, rng), r = random_tensor({1, 3, 5, 5}, rng);
    results.push_back(check("conv2d_3x3_pad1", {x, w, b},
                            [&] { return project(ad::conv2d(x, w, b, 1, 1), r); }, tight));
    T64 r2 = random_tensor({1, 3, 3, 3}, rng);
    results.push_back(check("conv2d_3x3_stride2", {x, w, b},
                            [&] { return project(ad::conv2d(x, w, b, 2, 1), r2); }, tight));
    T64 w1 = random_tensor({3, 2, 1, 1}, rng);
    results.push_back(check("conv2d_1x1", {x, w1, b},
                            [&] { return project(ad::conv2d(x, w1, b, 1, 0), r); }, tight));
  }
  {
    T64 x = random_tensor({2, 3, 4, 4}, rng), g = random_tensor({3}, rng, 0.5, 1.5),
        b = random_tensor({3}, rng), r = random_tensor({2, 3, 4, 4}, rng);
    ad::BatchNormState<double> st{T64::zeros({3}), T64::full({3}, 1.0)};
    results.push_back(check("batchnorm2d_train", {x, g, b},
                            [&] { return project(ad::batchnorm2d(x, g, b, st, true), r); },
                            tight));
    ad::BatchNormState<double> st_eval{random_tensor({3}, rng), random_tensor({3}, rng, 0.5, 2.0)};
    results.push_back(check("batchnorm2d_eval", {x, g, b},
                            [&] { return project(ad::batchnorm2d(x, g, b, st_eval, false), r); },
                            tight));
  }
  {
    T64 x = random_tensor({1, 2, 3, 4}, rng), r = random_tensor({1, 2, 6, 8}, rng);
    results.push_back(check("upsample_bilinear2x", {x},
                            [&] { return project(ad::upsample_bilinear2x(x), r); }, tight));
  }
  {
    T64 x = away_from_zero({2, 3, 3}, rng), y = random_tensor({2, 3, 3}, rng),
        r = random_tensor({2, 3, 3}, rng);
    results.push_back(check("relu", {x}, [&] { return project(ad::relu(x), r); }, tight));
    results.push_back(check("abs", {x}, [&] { return project(ad::abs(x), r); }, tight));
    T64 z = random_tensor({2, 3, 3}, rng, -6.0, 6.0);
    results.push_back(check("sigmoid", {z}, [&] { return project(ad::sigmoid(z), r); }, tight));
    results.push_back(check("add", {x, y}, [&] { return project(ad::add(x, y), r); }, tight));
    results.push_back(check("sub", {x, y}, [&] { return project(ad::sub(x, y), r); }, tight));
    results.push_back(check("mul", {x, y}, [&] { return project(ad::mul(x, y), r); }, tight));
    results.push_back(check("scale", {x}, [&] { return project(ad::scale(x, 2.5), r); }, tight));
    results.push_back(check("mean", {x}, [&] { return ad::mean(ad::mul(x, y)); }, tight));
  }
  {
    T64 a = random_tensor({2, 2, 3, 3}, rng), b = random_tensor({2, 3, 3, 3}, rng),
        r = random_tensor({2, 5, 3, 3}, rng), r2 = random_tensor({2, 2, 3, 3}, rng),
        r3 = random_tensor({2, 5, 1, 1}, rng);
    results.push_back(check("concat_channels", {a, b},
                            [&] { return project(ad::concat_channels(a, b), r); }, tight));
    results.push_back(check("slice_channels", {b},
                            [&] { return project(ad::slice_channels(b, 1, 3), r2); }, tight));
    results.push_back(check("global_avg_pool", {a, b}, [&] {
      return project(ad::global_avg_pool(ad::concat_channels(a, b)), r3);
    }, tight));
  }
  {
    T64 p1 = random_tensor({2, 1, 4, 4}, rng, 0.1, 0.9), p2 = random_tensor({2, 1, 2, 2}, rng, 0.1, 0.9);
    T64 y1 = random_tensor({2, 1, 4, 4}, rng, 0.0, 1.0), y2 = random_tensor({2, 1, 2, 2}, rng, 0.0, 1.0);
    for (T64* y : {&y1, &y2})
      for (double& v : y->mutable_data()) v = v > 0.5 ? 1.0 : 0.0;
    results.push_back(check("multiscale_bce", {p1, p2},
                            [&] { return losses::multiscale_bce<double>({p1, p2}, {y1, y2}); },
                            tight));
    T64 z1 = random_tensor({2, 1, 4, 4}, rng, -4, 4), z2 = random_tensor({2, 1, 2, 2}, rng, -4, 4);
    results.push_back(check("multiscale_bce_with_logits", {z1, z2}, [&] {
      return losses::multiscale_bce_with_logits<double>({z1, z2}, {y1, y2});
    }, tight));
    T64 u = away_from_zero({2, 1, 4, 4}, rng), ug = T64::zeros({2, 1, 4, 4}),
        m = random_tensor({2, 1, 4, 4}, rng, 0.0, 1.0);
    results.push_back(check("masked_l1", {u},
                            [&] { return losses::masked_l1<double>({u}, {ug}, {m}); }, tight));
    T64 a = random_tensor({4}, rng, 0, 400), at = a.detach();
    for (double& v : at.mutable_data()) v += 5.0;
    results.push_back(check("age_l1", {a}, [&] { return losses::age_l1(a, at); }, tight));
  }
  {
    Options net = loose;
    net.h = 1e-5;
    net.max_entries_per_tensor = 12;

    models::NetConfig cfg;
    cfg.head = models::HeadSet::SegUV;
    cfg.num_scales = 3;
    cfg.base_channels = 2;
    cfg.max_channels = 4;
    cfg.blocks_per_stage = 1;
    cfg.input_size = 8;
    models::UNet<double> fine(cfg, seed);
    T64 x = random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0);
    ImageGrid m0(8, 8), m1(8, 8), u0(8, 8), u1(8, 8), v0(8, 8), v1(8, 8);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (std::size_t i = 0; i < 64; ++i) {
      m0[i] = d(rng) > 0.4;
      m1[i] = d(rng) > 0.4;
      u0[i] = 40 * d(rng);
      u1[i] = 40 * d(rng);
      v0[i] = 4 * d(rng);
      v1[i] = 4 * d(rng);
    }
    auto target =
        losses::make_multiscale_target<double>({&m0, &m1}, {&u0, &u1}, {&v0, &v1}, cfg.num_scales);
    auto params = fine.trainable_parameters();
    params.push_back(x);
    results.push_back(check("fine_net_reg_loss", params, [&] {
      auto out = fine.forward(x, true);
      auto uv = losses::masked_l1_uv(out.u, out.v, target.mask, target);
      auto seg = losses::multiscale_bce_with_logits(out.mask_logits, target.mask);
      return losses::total_reg_loss(uv.l_u, uv.l_v, seg);
    }, net));

    cfg.head = models::HeadSet::Age;
    models::UNet<double> age(cfg, seed + 1);
    T64 ages = T64::from_vector({2}, {120.0, 260.0});
    auto age_params = age.trainable_parameters();
    age_params.push_back(x);
    results.push_back(check("age_net_l1", age_params, [&] {
      return losses::age_l1(age.forward(x, true).age, ages);
    }, net));
  }
  return results;
}

}  // namespace celeganser::gradcheck
