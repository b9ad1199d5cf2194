// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "panoseg/numerics/kernels.hpp"
#include "panoseg/reference/kernels.hpp"

namespace {

namespace K = panoseg::nn::kernels;
namespace R = panoseg::reference::kernels;

std::vector<double> random_vector(std::size_t n) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vector(n * n), b = random_vector(n * n);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            K::matmul(n, n, n, a.data(), b.data(), c.data());
        } else {
            R::matmul(n, n, n, a.data(), b.data(), c.data());
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

K::ConvGeometry conv_geometry(std::size_t size) {
    K::ConvGeometry g;
    g.batch = 2;
    g.in_channels = 32;
    g.out_channels = 32;
    g.height = size;
    g.width = 2 * size;
    g.kernel_h = 3;
    g.kernel_w = 3;
    g.pad_h = 1;
    g.pad_w = 1;
    g.padding = panoseg::nn::PaddingMode::spherical;
    return g;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
    const auto x = random_vector(g.batch * g.in_channels * g.height * g.width);
    const auto w = random_vector(g.out_channels * g.in_channels * 9);
    const auto bias = random_vector(g.out_channels);
    std::vector<double> out(g.batch * g.out_channels * g.out_h() * g.out_w());
    for (auto _ : state) {
        if constexpr (Parallel) {
            K::conv2d_forward(g, x.data(), w.data(), bias.data(), out.data());
        } else {
            R::conv2d_forward(g, x.data(), w.data(), bias.data(), out.data());
        }
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
    const auto g = conv_geometry(static_cast<std::size_t>(state.range(0)));
    const auto x = random_vector(g.batch * g.in_channels * g.height * g.width);
    const auto gout = random_vector(g.batch * g.out_channels * g.out_h() * g.out_w());
    std::vector<double> gw(g.out_channels * g.in_channels * 9), gb(g.out_channels);
    for (auto _ : state) {
        if constexpr (Parallel) {
            K::conv2d_backward_weight(g, gout.data(), x.data(), gw.data(), gb.data());
        } else {
            R::conv2d_backward_weight(g, gout.data(), x.data(), gw.data(), gb.data());
        }
        benchmark::DoNotOptimize(gw.data());
    }
}

template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t planes = 64;
    const auto x = random_vector(planes * n * 2 * n);
    std::vector<double> out(planes * 4 * n * 8 * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            K::bilinear_forward(planes, n, 2 * n, 4 * n, 8 * n, x.data(), out.data());
        } else {
            R::bilinear_forward(planes, n, 2 * n, 4 * n, 8 * n, x.data(), out.data());
        }
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<false>)->Name("matmul/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Name("conv2d_forward/parallel")->Arg(16)->Arg(32);
BENCHMARK(BM_ConvForward<false>)->Name("conv2d_forward/reference")->Arg(16)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv2d_backward_weight/parallel")->Arg(16)->Arg(32);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv2d_backward_weight/reference")->Arg(16)->Arg(32);
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/parallel")->Arg(8)->Arg(16);
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/reference")->Arg(8)->Arg(16);

BENCHMARK_MAIN();
