#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "evtrack/autograd.hpp"
#include "evtrack/gradcheck.hpp"
#include "evtrack/kernels.hpp"
#include "evtrack/ops.hpp"
#include "evtrack/tensor_io.hpp"
#include "test_util.hpp"

using namespace evtrack;
using kernels::ConvGeometry;

namespace {

// Direct six-loop cross-correlation with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* bias, const ConvGeometry& g) {
    const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int cout = w.dim(0), cg = w.dim(1), k = w.dim(2);
    const int ho = (h + 2 * g.padding - k) / g.stride + 1;
    const int wo = (wd + 2 * g.padding - k) / g.stride + 1;
    const int out_per_group = cout / g.groups;
    Tensor out({n, cout, ho, wo});
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < cout; ++o)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double acc = bias ? (*bias)[o] : 0.0;
                    const int group = o / out_per_group;
                    for (int c = 0; c < cg; ++c)
                        for (int u = 0; u < k; ++u)
                            for (int v = 0; v < k; ++v) {
                                const int y = i * g.stride - g.padding + u;
                                const int xx = j * g.stride - g.padding + v;
                                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                                acc += w.at(o, c, u, v) * x.at(b, group * cg + c, y, xx);
                            }
                    out.at(b, o, i, j) = acc;
                }
    (void)cin;
    return out;
}

struct RandomConv {
    Tensor x, w, bias;
    ConvGeometry g;
};

RandomConv random_conv(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, 3);
    const int groups = 1 + pick(rng) % 2;
    const int cin = groups * (1 + pick(rng));
    const int cout = groups * (1 + pick(rng));
    const int k = pick(rng) % 2 ? 3 : 1;
    ConvGeometry g{1 + pick(rng) % 2, k / 2 + pick(rng) % 2, groups};
    const int h = 5 + pick(rng), w = 5 + pick(rng);
    return {Tensor::randn({1 + pick(rng) % 2, cin, h, w}, rng), Tensor::randn({cout, cin / groups, k, k}, rng),
            Tensor::randn({cout}, rng), g};
}

}  // namespace

TEST_CASE("conv2d examples") {
    Tensor x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0);
    auto y = kernels::conv2d_forward(x, w, nullptr, {1, 0, 1});
    CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(y[0] == 9.0);
    auto p = kernels::conv2d_forward(x, w, nullptr, {1, 1, 1});
    CHECK(p.at(0, 0, 0, 0) == 4.0);
    CHECK(p.at(0, 0, 1, 1) == 9.0);
    CHECK(kernels::conv_output_size(64, 3, 2, 1) == 32);
}

TEST_CASE("conv2d rejects bad shapes") {
    Tensor x({1, 3, 5, 5}), w({2, 2, 3, 3});
    CHECK_THROWS_AS(kernels::conv2d_forward(x, w, nullptr, {1, 1, 1}), std::invalid_argument);
    Tensor even({2, 3, 2, 2});
    CHECK_THROWS_AS(kernels::conv2d_forward(x, even, nullptr, {1, 1, 1}), std::invalid_argument);
    Tensor b({3});
    Tensor ok({2, 3, 3, 3});
    CHECK_THROWS_AS(kernels::conv2d_forward(x, ok, &b, {1, 1, 1}), std::invalid_argument);
}

TEST_CASE("conv2d matches the direct oracle and the serial reference") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        auto c = random_conv(rng);
        const auto oracle = naive_conv(c.x, c.w, &c.bias, c.g);
        const auto omp = kernels::conv2d_forward(c.x, c.w, &c.bias, c.g);
        const auto ref = kernels::ref::conv2d_forward(c.x, c.w, &c.bias, c.g);
        CHECK(max_abs_diff(oracle, omp) < 1e-12);
        CHECK(omp == ref);

        const auto go = Tensor::randn(omp.shape(), rng);
        Tensor gx = Tensor::zeros_like(c.x), gw = Tensor::zeros_like(c.w), gb = Tensor::zeros_like(c.bias);
        Tensor rx = gx, rw = gw, rb = gb;
        kernels::conv2d_backward(c.x, c.w, c.g, go, &gx, &gw, &gb);
        kernels::ref::conv2d_backward(c.x, c.w, c.g, go, &rx, &rw, &rb);
        CHECK(max_abs_diff(gx, rx) < 1e-12);
        CHECK(max_abs_diff(gw, rw) < 1e-12);
        CHECK(max_abs_diff(gb, rb) < 1e-12);
        // Adjoint identity <conv(x), go> = <x, conv^T(go)> for the bias-free map.
        Tensor ax = Tensor::zeros_like(c.x);
        kernels::conv2d_backward(c.x, c.w, c.g, go, &ax, nullptr, nullptr);
        const double lhs = naive_conv(c.x, c.w, nullptr, c.g).dot(go);
        CHECK(lhs == doctest::Approx(c.x.dot(ax)).epsilon(1e-10));
    }
}

TEST_CASE("depthwise examples and grouped-conv oracle") {
    std::mt19937_64 rng(6);
    auto x = Tensor::randn({2, 3, 6, 5}, rng);
    Tensor delta({2, 3, 3, 3});
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) delta.at(n, c, 1, 1) = 1.0;
    CHECK(kernels::depthwise_conv2d_forward(x, delta) == x);
    CHECK(kernels::depthwise_conv2d_forward(x, Tensor({2, 3, 3, 3})).max_abs() == 0.0);

    for (int trial = 0; trial < 20; ++trial) {
        const int c = 1 + trial % 4;
        auto xi = Tensor::randn({1, c, 7, 6}, rng);
        auto kk = Tensor::randn({1, c, 3, 3}, rng);
        const auto dw = kernels::depthwise_conv2d_forward(xi, kk);
        const auto grouped = naive_conv(xi, kk.reshaped({c, 1, 3, 3}), nullptr, {1, 1, c});
        CHECK(max_abs_diff(dw, grouped) < 1e-12);
        CHECK(dw == kernels::ref::depthwise_conv2d_forward(xi, kk));
        const auto go = Tensor::randn(dw.shape(), rng);
        Tensor gx = Tensor::zeros_like(xi), gk = Tensor::zeros_like(kk), rx = gx, rk = gk;
        kernels::depthwise_conv2d_backward(xi, kk, go, &gx, &gk);
        kernels::ref::depthwise_conv2d_backward(xi, kk, go, &rx, &rk);
        CHECK(max_abs_diff(gx, rx) < 1e-12);
        CHECK(max_abs_diff(gk, rk) < 1e-12);
    }
}

TEST_CASE("deformable conv with zero offsets is conv2d") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        auto c = random_conv(rng);
        c.g.groups = 1;
        c.w = Tensor::randn({c.w.dim(0), c.x.dim(1), c.w.dim(2), c.w.dim(3)}, rng);
        const auto conv = kernels::conv2d_forward(c.x, c.w, &c.bias, c.g);
        const int kk = c.w.dim(2) * c.w.dim(3);
        Tensor off({c.x.dim(0), 2 * kk, conv.dim(2), conv.dim(3)});
        CHECK(max_abs_diff(kernels::deform_conv2d_forward(c.x, off, c.w, &c.bias, c.g), conv) < 1e-12);
    }
}

TEST_CASE("deformable conv on a constant field ignores in-bounds offsets") {
    std::mt19937_64 rng(8);
    Tensor x({1, 2, 9, 9}, 1.7);
    auto w = Tensor::randn({3, 2, 3, 3}, rng);
    ConvGeometry g{1, 0, 1};
    Tensor zero({1, 18, 7, 7});
    Tensor off({1, 18, 7, 7});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int tap = 0; tap < 9; ++tap)
        for (int axis = 0; axis < 2; ++axis)
            for (int i = 0; i < 7; ++i)
                for (int j = 0; j < 7; ++j) {
                    const int pos = (axis == 0 ? i + tap / 3 : j + tap % 3);
                    const double lo = std::max(-1.5, -static_cast<double>(pos));
                    const double hi = std::min(1.5, 8.0 - pos);
                    off.at(0, 2 * tap + axis, i, j) = lo + (hi - lo) * unit(rng);
                }
    const auto a = kernels::deform_conv2d_forward(x, zero, w, nullptr, g);
    const auto b = kernels::deform_conv2d_forward(x, off, w, nullptr, g);
    CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("deformable conv matches its serial reference") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        ConvGeometry g{1 + trial % 2, 1, 1};
        auto x = Tensor::randn({2, 3, 8, 7}, rng);
        auto w = Tensor::randn({4, 3, 3, 3}, rng);
        auto b = Tensor::randn({4}, rng);
        const int ho = kernels::conv_output_size(8, 3, g.stride, 1);
        const int wo = kernels::conv_output_size(7, 3, g.stride, 1);
        auto off = Tensor::uniform({2, 18, ho, wo}, rng, -2.0, 2.0);
        const auto y = kernels::deform_conv2d_forward(x, off, w, &b, g);
        CHECK(y == kernels::ref::deform_conv2d_forward(x, off, w, &b, g));
        const auto go = Tensor::randn(y.shape(), rng);
        Tensor gx = Tensor::zeros_like(x), go_ = Tensor::zeros_like(off), gw = Tensor::zeros_like(w),
               gb = Tensor::zeros_like(b);
        Tensor rx = gx, ro = go_, rw = gw, rb = gb;
        kernels::deform_conv2d_backward(x, off, w, g, go, &gx, &go_, &gw, &gb);
        kernels::ref::deform_conv2d_backward(x, off, w, g, go, &rx, &ro, &rw, &rb);
        CHECK(max_abs_diff(gx, rx) < 1e-12);
        CHECK(max_abs_diff(go_, ro) < 1e-12);
        CHECK(max_abs_diff(gw, rw) < 1e-12);
        CHECK(max_abs_diff(gb, rb) < 1e-12);
    }
}

TEST_CASE("bilinear sampling") {
    const double plane[4] = {1.0, 2.0, 3.0, 4.0};
    CHECK(kernels::bilinear_sample(plane, 2, 2, 0.5, 0.5) == doctest::Approx(2.5));
    CHECK(kernels::bilinear_sample(plane, 2, 2, 1.0, 1.0) == 4.0);
    CHECK(kernels::bilinear_sample(plane, 2, 2, -1.0, 0.0) == 0.0);
    CHECK(kernels::bilinear_sample(plane, 2, 2, -0.5, 0.0) == doctest::Approx(0.5));
    double dy = 0, dx = 0;
    kernels::bilinear_sample_grad(plane, 2, 2, 0.25, 0.25, dy, dx);
    CHECK(dy == doctest::Approx(2.0));
    CHECK(dx == doctest::Approx(1.0));
    double acc[4] = {0, 0, 0, 0};
    kernels::bilinear_scatter(acc, 2, 2, 0.5, 0.25, 1.0);
    CHECK(acc[0] + acc[1] + acc[2] + acc[3] == doctest::Approx(1.0));
    CHECK(acc[1] == doctest::Approx(0.125));
}

TEST_CASE("pointwise examples") {
    Tensor x({1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0});
    const auto s = ops::sigmoid(x);
    CHECK(s[1] == 0.5);
    for (double v : s.values()) CHECK((v > 0.0 && v < 1.0));
    const auto r = ops::relu(x);
    CHECK(r[0] == 0.0);
    CHECK(r[2] == 2.0);
    Tensor big({1, 1, 1, 2}, std::vector<double>{-800.0, 800.0});
    CHECK(ops::sigmoid(big).all_finite());
}

TEST_CASE("softmax examples and properties") {
    Tensor x({1, 2, 1, 1}, std::vector<double>{0.0, std::log(3.0)});
    const auto y = ops::softmax_axis(x, 1);
    CHECK(y[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(0.75).epsilon(1e-14));
    const auto u = ops::softmax_axis(Tensor({1, 1, 1, 5}, 3.0), 3);
    for (double v : u.values()) CHECK(v == doctest::Approx(0.2));

    std::mt19937_64 rng(10);
    for (int axis = 1; axis < 4; ++axis) {
        auto z = Tensor::randn({2, 3, 4, 5}, rng, 30.0);
        const auto p = ops::softmax_axis(z, axis);
        Tensor shifted = z;
        for (auto& v : shifted.values()) v += 123.0;
        CHECK(max_abs_diff(p, ops::softmax_axis(shifted, axis)) < 1e-12);
        const int len = z.dim(axis);
        for (double v : p.values()) CHECK(v >= 0.0);
        int inner = 1;
        for (int a = axis + 1; a < 4; ++a) inner *= z.dim(a);
        const int outer = static_cast<int>(p.size()) / (inner * len);
        for (int o = 0; o < outer; ++o)
            for (int i = 0; i < inner; ++i) {
                double total = 0.0;
                for (int k = 0; k < len; ++k) total += p[(static_cast<std::size_t>(o) * len + k) * inner + i];
                CHECK(std::abs(total - 1.0) < 1e-12);
            }
    }
}

TEST_CASE("batch norm train and eval") {
    std::mt19937_64 rng(11);
    auto x = Tensor::randn({3, 2, 4, 4}, rng, 2.0);
    for (auto& v : x.values()) v += 5.0;
    Tensor gamma({2}, 1.0), beta({2}, 0.0);
    ops::BatchNormState state{Tensor({2}, 0.0), Tensor({2}, 1.0), 0.1};
    ops::BatchNormCache cache;
    const auto y = ops::batch_norm(x, gamma, beta, true, &state, ops::kNormEps, &cache);
    const auto stats = ops::channel_stats(y, 0.0);
    for (int c = 0; c < 2; ++c) {
        CHECK(std::abs(stats.mean[c]) < 1e-12);
        CHECK(stats.sigma[c] == doctest::Approx(1.0).epsilon(1e-5));
    }
    const auto xs = ops::channel_stats(x, 0.0);
    const double m = 3 * 16;
    for (int c = 0; c < 2; ++c) {
        CHECK(state.running_mean[c] == doctest::Approx(0.1 * xs.mean[c]));
        const double unbiased = xs.sigma[c] * xs.sigma[c] * m / (m - 1);
        CHECK(state.running_var[c] == doctest::Approx(0.9 + 0.1 * unbiased));
    }
    const auto e = ops::batch_norm(x, gamma, beta, false, &state, ops::kNormEps, nullptr);
    CHECK(e.at(0, 0, 0, 0) ==
          doctest::Approx((x.at(0, 0, 0, 0) - state.running_mean[0]) / std::sqrt(state.running_var[0] + ops::kNormEps)));

    Tensor constant({1, 1, 3, 3}, 4.0);
    const auto z = ops::batch_norm(constant, Tensor({1}, 1.0), Tensor({1}, 0.0), true, nullptr, ops::kNormEps, nullptr);
    CHECK(z.max_abs() < 1e-6);
}

TEST_CASE("adaptive average pooling") {
    Tensor x({1, 1, 4, 4});
    std::iota(x.values().begin(), x.values().end(), 0.0);
    const auto g = ops::adaptive_avg_pool(x, 1, 1);
    CHECK(g[0] == doctest::Approx(7.5));
    const auto q = ops::adaptive_avg_pool(x, 2, 2);
    CHECK(q[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
    CHECK(q[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
    CHECK(ops::adaptive_avg_pool(x, 4, 4) == x);
    // 5 -> 3 bins: [0,2), [1,4), [3,5).
    Tensor r({1, 1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
    const auto p = ops::adaptive_avg_pool(r, 1, 3);
    CHECK(p[0] == doctest::Approx(1.5));
    CHECK(p[1] == doctest::Approx(3.0));
    CHECK(p[2] == doctest::Approx(4.5));
}

TEST_CASE("channel statistics") {
    Tensor c({1, 1, 2, 2}, 3.0);
    auto s = ops::channel_stats(c);
    CHECK(s.mean[0] == 3.0);
    CHECK(s.sigma[0] == doctest::Approx(std::sqrt(ops::kNormEps)));
    Tensor pm({1, 1, 1, 2}, std::vector<double>{-1.0, 1.0});
    s = ops::channel_stats(pm);
    CHECK(s.mean[0] == 0.0);
    CHECK(s.sigma[0] == doctest::Approx(std::sqrt(1.0 + ops::kNormEps)));
}

TEST_CASE("kernels are pure") {
    std::mt19937_64 rng(12);
    auto x = Tensor::randn({2, 4, 9, 9}, rng);
    auto w = Tensor::randn({4, 4, 3, 3}, rng);
    auto off = Tensor::randn({2, 18, 9, 9}, rng);
    CHECK(kernels::conv2d_forward(x, w, nullptr, {1, 1, 1}) == kernels::conv2d_forward(x, w, nullptr, {1, 1, 1}));
    CHECK(kernels::deform_conv2d_forward(x, off, w, nullptr, {1, 1, 1}) ==
          kernels::deform_conv2d_forward(x, off, w, nullptr, {1, 1, 1}));
}

TEST_CASE("autograd accumulates through shared nodes") {
    auto a = ag::parameter(Tensor({1, 1, 1, 2}, std::vector<double>{1.0, 2.0}));
    auto b = ag::mul(a, a);
    auto c = ag::sum(ag::add(b, a));
    ag::backward(c);
    CHECK(a->grad[0] == doctest::Approx(3.0));
    CHECK(a->grad[1] == doctest::Approx(5.0));
    auto k = ag::constant(Tensor({1}, 2.0));
    auto d = ag::scale(k, 3.0);
    CHECK(!d->requires_grad);
    CHECK(!d->backward_fn);
}

TEST_CASE("every registered op passes the gradient check on five seeds") {
    for (const auto& c : tensor_gradcheck_cases()) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto r = run_case(c, seed);
            CAPTURE(c.name);
            CAPTURE(seed);
            CAPTURE(r.max_rel_error);
            CAPTURE(r.worst);
            CHECK(r.passed);
            CHECK(r.probes > 0);
        }
    }
}

TEST_CASE("gradient check on a linear map is near exact") {
    std::mt19937_64 rng(13);
    const auto w = Tensor::randn({3, 2, 3, 3}, rng);
    GradCheckProblem p{{"x"}, {Tensor::randn({1, 2, 6, 6}, rng)}, [w](const std::vector<ag::Var>& in) {
                           return ag::conv2d(in[0], ag::constant(w), nullptr, {1, 1, 1});
                       }};
    const auto r = grad_check(p, 3);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("gradient check of sigmoid after conv") {
    std::mt19937_64 rng(14);
    GradCheckProblem p{{"x", "w"},
                       {Tensor::randn({1, 2, 5, 5}, rng), Tensor::randn({2, 2, 3, 3}, rng)},
                       [](const std::vector<ag::Var>& in) {
                           return ag::sigmoid(ag::conv2d(in[0], in[1], nullptr, {1, 1, 1}));
                       }};
    const auto r = grad_check(p, 4);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("a corrupted backward fails the gradient check") {
    std::mt19937_64 rng(15);
    GradCheckProblem p{{"x"}, {Tensor::randn({1, 2, 4, 4}, rng)}, [](const std::vector<ag::Var>& in) {
                           auto y = ag::sigmoid(in[0]);
                           const auto& x = in[0];
                           return ag::make_node(y->value, {x}, [x, y](ag::Node& self) {
                               auto g = ops::sigmoid_backward(y->value, self.grad);
                               g.scale_(1.01);
                               x->accumulate(g);
                           });
                       }};
    const auto r = grad_check(p, 5);
    CHECK(!r.passed);
    CHECK(r.max_rel_error > 1e-3);
}

TEST_CASE("non-finite outputs fail the gradient check") {
    GradCheckProblem p{{"x"}, {Tensor({1, 1, 1, 2}, 1.0)}, [](const std::vector<ag::Var>& in) {
                           auto v = in[0]->value;
                           v[0] = std::nan("");
                           return ag::add(in[0], ag::constant(v));
                       }};
    const auto r = grad_check(p, 1);
    CHECK(!r.finite);
    CHECK(!r.passed);
}

TEST_CASE("tensor blob round trip") {
    std::mt19937_64 rng(16);
    const auto a = Tensor::randn({2, 3, 4, 5}, rng);
    const auto b = Tensor::randn({7}, rng);
    const auto bytes = encode_tensor_blob({&a, &b});
    CHECK(bytes.size() == (a.size() + b.size()) * 8);
    const auto back = decode_tensor_blob(bytes, {a.shape(), b.shape()});
    CHECK(back[0] == a);
    CHECK(back[1] == b);
    CHECK_THROWS(decode_tensor_blob(bytes.substr(1), {a.shape(), b.shape()}));
    Tensor one({1}, 1.0);
    const auto le = encode_tensor_blob({&one});
    CHECK(static_cast<unsigned char>(le[7]) == 0x3f);
    CHECK(static_cast<unsigned char>(le[6]) == 0xf0);

    const auto dir = test::scratch_dir("tensor_io");
    save_tensor(a, dir / "a.bin");
    CHECK(std::filesystem::exists(dir / "a.bin.json"));
    CHECK(load_tensor(dir / "a.bin") == a);
}

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.sum() == doctest::Approx(9.0));
    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1.0}));
    CHECK_THROWS(t.reshaped({4}));
    CHECK(t.reshaped({3, 2}).shape() == std::vector<int>{3, 2});
    CHECK_THROWS(shape4(t));
    t[0] = INFINITY;
    CHECK(!t.all_finite());
}
