// Serial reference vs parallel kernels on layer sizes used by the networks.
#include <benchmark/benchmark.h>

#include <vector>

#include "hatebm/kernels.hpp"
#include "hatebm/rng.hpp"

namespace k = hatebm::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  hatebm::Rng rng(seed);
  std::vector<double> v(n);
  rng.fill_normal(v);
  return v;
}

k::Conv2dGeometry conv_geometry(const benchmark::State& st) {
  k::Conv2dGeometry g;
  g.batch = 16;
  g.in_h = g.in_w = static_cast<std::size_t>(st.range(0));
  g.in_c = g.out_c = static_cast<std::size_t>(st.range(1));
  g.kernel = 3;
  g.stride = 1;
  g.pad = 1;
  return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& st) {
  const auto g = conv_geometry(st);
  const auto in = randn(g.in_size(), 1), w = randn(g.weight_size(), 2), b = randn(g.out_c, 3);
  std::vector<double> out(g.out_size());
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::conv2d_forward(g, in, w, b, out);
    } else {
      k::serial::conv2d_forward(g, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * g.out_size() * g.kernel * g.kernel * g.in_c));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& st) {
  const auto g = conv_geometry(st);
  const auto in = randn(g.in_size(), 1), w = randn(g.weight_size(), 2), go = randn(g.out_size(), 3);
  std::vector<double> gi(g.in_size()), gw(g.weight_size()), gb(g.out_c);
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::conv2d_backward_input(g, go, w, gi);
      k::conv2d_backward_params(g, in, go, gw, gb);
    } else {
      k::serial::conv2d_backward_input(g, go, w, gi);
      k::serial::conv2d_backward_params(g, in, go, gw, gb);
    }
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Dense(benchmark::State& st) {
  k::DenseGeometry g{16, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1))};
  const auto in = randn(g.batch * g.in, 1), w = randn(g.in * g.out, 2), b = randn(g.out, 3);
  const auto go = randn(g.batch * g.out, 4);
  std::vector<double> out(g.batch * g.out), gi(g.batch * g.in), gw(g.in * g.out), gb(g.out);
  for (auto _ : st) {
    if constexpr (Parallel) {
      k::dense_forward(g, in, w, b, out);
      k::dense_backward_input(g, go, w, gi);
      k::dense_backward_params(g, in, go, gw, gb);
    } else {
      k::serial::dense_forward(g, in, w, b, out);
      k::serial::dense_backward_input(g, go, w, gi);
      k::serial::dense_backward_params(g, in, go, gw, gb);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Args({32, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Dense<false>)->Args({3072, 64})->Args({128, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Dense<true>)->Args({3072, 64})->Args({128, 128})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
