// Serial reference kernels against the im2col/OpenMP versions.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "celeganser/ad/kernels.hpp"

namespace k = celeganser::ad::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

k::ConvDims dims_from(const benchmark::State& st) {
  k::ConvDims d;
  d.batch = 8;
  d.in_channels = d.out_channels = static_cast<int>(st.range(0));
  d.height = d.width = static_cast<int>(st.range(1));
  d.kernel = 3;
  d.pad = 1;
  return d;
}

template <bool Reference>
void BM_ConvForward(benchmark::State& st) {
  const auto d = dims_from(st);
  auto in = random_vec(std::size_t(d.batch) * d.in_channels * d.height * d.width, 1);
  auto w = random_vec(std::size_t(d.out_channels) * d.in_channels * 9, 2);
  auto b = random_vec(d.out_channels, 3);
  std::vector<float> out(std::size_t(d.batch) * d.out_channels * d.out_height() * d.out_width());
  for (auto _ : st) {
    if constexpr (Reference)
      k::conv2d_forward_reference<float>(d, in, w, b, out);
    else
      k::conv2d_forward<float>(d, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.counters["MAC/s"] = benchmark::Counter(
      double(d.batch) * d.out_channels * d.out_height() * d.out_width() * d.in_channels * 9,
      benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& st) {
  const auto d = dims_from(st);
  auto in = random_vec(std::size_t(d.batch) * d.in_channels * d.height * d.width, 1);
  auto w = random_vec(std::size_t(d.out_channels) * d.in_channels * 9, 2);
  auto go = random_vec(std::size_t(d.batch) * d.out_channels * d.out_height() * d.out_width(), 3);
  std::vector<float> gi(in.size()), gw(w.size()), gb(d.out_channels);
  for (auto _ : st) {
    if constexpr (Reference)
      k::conv2d_backward_reference<float>(d, in, w, go, gi, gw, gb);
    else
      k::conv2d_backward<float>(d, in, w, go, gi, gw, gb);
    benchmark::DoNotOptimize(gi.data());
  }
}

template <bool Reference>
void BM_Upsample(benchmark::State& st) {
  const int planes = 8 * 16, side = static_cast<int>(st.range(0));
  auto in = random_vec(std::size_t(planes) * side * side, 4);
  std::vector<float> out(in.size() * 4);
  for (auto _ : st) {
    if constexpr (Reference)
      k::upsample2x_forward_reference<float>(planes, side, side, in, out);
    else
      k::upsample2x_forward<float>(planes, side, side, in, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Args({16, 64})->Args({32, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Args({16, 64})->Args({32, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Args({16, 64})->Args({32, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Args({16, 64})->Args({32, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Upsample<true>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Upsample<false>)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
