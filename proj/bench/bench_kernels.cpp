// OpenMP kernels vs the serial reference versions, on network-sized inputs.
#include <benchmark/benchmark.h>

#include <random>

#include "advface/kernels.hpp"

using namespace advface;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<float> d(0.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(g);
    return v;
}

// Shapes of the four conv layers of the default network.
ConvShape layer_shape(int i) {
    static const ConvShape shapes[] = {
        {1, 64, 64, 8, 3, 1, 1},
        {8, 32, 32, 16, 3, 1, 1},
        {16, 16, 16, 32, 3, 1, 1},
        {32, 8, 8, 32, 3, 1, 1},
    };
    return shapes[i];
}

template <auto Conv>
void bm_conv(benchmark::State& state) {
    const ConvShape s = layer_shape(static_cast<int>(state.range(0)));
    const auto in = noise(static_cast<std::size_t>(s.in_channels) * s.in_height * s.in_width, 1);
    const auto w = noise(static_cast<std::size_t>(s.out_filters) * s.in_channels * 9, 2);
    const auto b = noise(static_cast<std::size_t>(s.out_filters), 3);
    std::vector<float> out(static_cast<std::size_t>(s.out_filters) * s.out_height() * s.out_width());
    for (auto _ : state) {
        Conv(s, in, w, b, {}, out);
        benchmark::DoNotOptimize(out.data());
    }
}

Image test_image(int side) {
    std::mt19937_64 g(4);
    Image img(side, side, 1);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(g() & 0xFF);
    return img;
}

template <auto Median>
void bm_median(benchmark::State& state) {
    const Image img = test_image(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(Median(img, 5));
}

template <auto Cosine>
void bm_cosine(benchmark::State& state) {
    std::vector<std::vector<float>> e;
    for (int i = 0; i < state.range(0); ++i) e.push_back(noise(64, 10 + static_cast<std::uint64_t>(i)));
    for (auto _ : state) benchmark::DoNotOptimize(Cosine(e));
}

}  // namespace

BENCHMARK(bm_conv<kernels::conv2d>)->Name("conv2d/omp")->DenseRange(0, 3);
BENCHMARK(bm_conv<reference::conv2d>)->Name("conv2d/ref")->DenseRange(0, 3);
BENCHMARK(bm_median<kernels::median_filter>)->Name("median5/omp")->Arg(64)->Arg(256);
BENCHMARK(bm_median<reference::median_filter>)->Name("median5/ref")->Arg(64)->Arg(256);
BENCHMARK(bm_cosine<kernels::cosine_matrix>)->Name("cosine_matrix/omp")->Arg(100)->Arg(400);
BENCHMARK(bm_cosine<reference::cosine_matrix>)->Name("cosine_matrix/ref")->Arg(100)->Arg(400);

BENCHMARK_MAIN();
