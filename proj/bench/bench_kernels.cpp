#include <vector>

#include <benchmark/benchmark.h>

#include "infusenet/kernels.hpp"
#include "infusenet/rng.hpp"

namespace k = ifn::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  ifn::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

k::ConvShape conv_shape(const benchmark::State& state) {
  // Second block of the default backbone at batch 8: 16 -> 32 channels on 32x32.
  return {8, 16, 32, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 3};
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = random_vector(std::size_t(s.batch) * s.in_channels * s.height * s.width, 1);
  const auto w = random_vector(std::size_t(s.out_channels) * s.in_channels * 9, 2);
  const auto b = random_vector(std::size_t(s.out_channels), 3);
  std::vector<double> y(std::size_t(s.batch) * s.out_channels * s.height * s.width);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::conv2d_forward(s, x, w, b, y);
    } else {
      k::serial::conv2d_forward(s, x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(y.size()) * s.in_channels * 9);
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto x = random_vector(std::size_t(s.batch) * s.in_channels * s.height * s.width, 4);
  const auto gy = random_vector(std::size_t(s.batch) * s.out_channels * s.height * s.width, 5);
  std::vector<double> gw(std::size_t(s.out_channels) * s.in_channels * 9), gb(std::size_t(s.out_channels));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::conv2d_backward_weight(s, x, gy, gw, gb);
    } else {
      k::serial::conv2d_backward_weight(s, x, gy, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_HornSchunckSweep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::size_t area = std::size_t(n) * n;
  const auto ix = random_vector(area, 6), iy = random_vector(area, 7), c = random_vector(area, 8);
  std::vector<double> u(area), v(area);
  const k::FlowTerms t{n, n, ix, iy, c};
  for (auto _ : state) {
    for (int color = 0; color < 2; ++color) {
      if constexpr (Parallel) {
        benchmark::DoNotOptimize(k::omp::hs_sweep(t, 0.002, color, u, v));
      } else {
        benchmark::DoNotOptimize(k::serial::hs_sweep(t, 0.002, color, u, v));
      }
    }
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(area));
}

template <bool Parallel>
void BM_PyramidRoundTrip(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto img = random_vector(std::size_t(n) * n, 9);
  std::vector<double> down(std::size_t(n / 2) * (n / 2)), up(std::size_t(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::pyr_down(img, n, n, down);
      k::omp::pyr_up(down, n / 2, n / 2, up);
    } else {
      k::serial::pyr_down(img, n, n, down);
      k::serial::pyr_up(down, n / 2, n / 2, up);
    }
    benchmark::DoNotOptimize(up.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Arg(32)->Arg(64);
BENCHMARK(BM_ConvForward<true>)->Arg(32)->Arg(64);
BENCHMARK(BM_ConvBackwardWeight<false>)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<true>)->Arg(32);
BENCHMARK(BM_HornSchunckSweep<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_HornSchunckSweep<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_PyramidRoundTrip<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_PyramidRoundTrip<true>)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
