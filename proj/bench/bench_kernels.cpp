// Serial reference kernels against the OpenMP versions on tracker-sized
// feature maps.
#include <random>

#include <benchmark/benchmark.h>

#include "evtrack/kernels.hpp"

namespace {

using namespace evtrack;

struct ConvSetup {
    Tensor x, w, grad_out;
    kernels::ConvGeometry g{1, 1, 1};

    explicit ConvSetup(int channels, int size) {
        std::mt19937_64 rng(7);
        x = Tensor::randn({1, channels, size, size}, rng);
        w = Tensor::randn({channels, channels, 3, 3}, rng, 0.1);
        grad_out = Tensor::randn({1, channels, size, size}, rng);
    }
};

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
    ConvSetup s(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        Tensor y = Parallel ? kernels::conv2d_forward(s.x, s.w, nullptr, s.g)
                            : kernels::ref::conv2d_forward(s.x, s.w, nullptr, s.g);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_Conv2dBackward(benchmark::State& state) {
    ConvSetup s(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        Tensor gx = Tensor::zeros_like(s.x), gw = Tensor::zeros_like(s.w);
        if (Parallel) {
            kernels::conv2d_backward(s.x, s.w, s.g, s.grad_out, &gx, &gw, nullptr);
        } else {
            kernels::ref::conv2d_backward(s.x, s.w, s.g, s.grad_out, &gx, &gw, nullptr);
        }
        benchmark::DoNotOptimize(gx.data());
    }
}

template <bool Parallel>
void BM_Depthwise(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
    std::mt19937_64 rng(3);
    Tensor x = Tensor::randn({4, c, n, n}, rng);
    Tensor k = Tensor::randn({4, c, 3, 3}, rng);
    for (auto _ : state) {
        Tensor y = Parallel ? kernels::depthwise_conv2d_forward(x, k) : kernels::ref::depthwise_conv2d_forward(x, k);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_DeformForwardBackward(benchmark::State& state) {
    ConvSetup s(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    std::mt19937_64 rng(11);
    const int n = static_cast<int>(state.range(1));
    Tensor off = Tensor::uniform({1, 18, n, n}, rng, -2.0, 2.0);
    for (auto _ : state) {
        Tensor gx = Tensor::zeros_like(s.x), go = Tensor::zeros_like(off), gw = Tensor::zeros_like(s.w);
        if (Parallel) {
            Tensor y = kernels::deform_conv2d_forward(s.x, off, s.w, nullptr, s.g);
            kernels::deform_conv2d_backward(s.x, off, s.w, s.g, s.grad_out, &gx, &go, &gw, nullptr);
            benchmark::DoNotOptimize(y.data());
        } else {
            Tensor y = kernels::ref::deform_conv2d_forward(s.x, off, s.w, nullptr, s.g);
            kernels::ref::deform_conv2d_backward(s.x, off, s.w, s.g, s.grad_out, &gx, &go, &gw, nullptr);
            benchmark::DoNotOptimize(y.data());
        }
        benchmark::DoNotOptimize(gx.data());
    }
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/ref")->Args({16, 32})->Args({32, 64});
BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/omp")->Args({16, 32})->Args({32, 64});
BENCHMARK(BM_Conv2dBackward<false>)->Name("conv2d_backward/ref")->Args({16, 32})->Args({32, 64});
BENCHMARK(BM_Conv2dBackward<true>)->Name("conv2d_backward/omp")->Args({16, 32})->Args({32, 64});
BENCHMARK(BM_Depthwise<false>)->Name("depthwise/ref")->Args({16, 16})->Args({64, 32});
BENCHMARK(BM_Depthwise<true>)->Name("depthwise/omp")->Args({16, 16})->Args({64, 32});
BENCHMARK(BM_DeformForwardBackward<false>)->Name("deform_fwd_bwd/ref")->Args({16, 16})->Args({32, 32});
BENCHMARK(BM_DeformForwardBackward<true>)->Name("deform_fwd_bwd/omp")->Args({16, 16})->Args({32, 32});

BENCHMARK_MAIN();
