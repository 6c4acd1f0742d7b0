#include <memory>

#include "evtrack/gradcheck.hpp"

namespace evtrack {

namespace {

using ag::Var;
using Inputs = const std::vector<Var>&;

Tensor rnd(std::vector<int> shape, std::mt19937_64& rng, double stddev = 1.0) {
    return Tensor::randn(std::move(shape), rng, stddev);
}

GradCheckCase conv_case(std::string name, int cin, int cout, int k, kernels::ConvGeometry g, bool bias) {
    return {std::move(name), [=](std::mt19937_64& rng) {
                GradCheckProblem p;
                p.input_names = {"x", "weight"};
                p.inputs = {rnd({2, cin, 7, 6}, rng), rnd({cout, cin / g.groups, k, k}, rng, 0.5)};
                if (bias) {
                    p.input_names.push_back("bias");
                    p.inputs.push_back(rnd({cout}, rng));
                }
                p.forward = [g, bias](Inputs in) { return ag::conv2d(in[0], in[1], bias ? in[2] : nullptr, g); };
                return p;
            }};
}

GradCheckCase deform_case(std::string name, int stride, int padding, bool bias) {
    return {std::move(name), [=](std::mt19937_64& rng) {
                const int h = 6, w = 7, k = 3;
                const int ho = kernels::conv_output_size(h, k, stride, padding);
                const int wo = kernels::conv_output_size(w, k, stride, padding);
                GradCheckProblem p;
                p.input_names = {"x", "offsets", "weight"};
                p.inputs = {rnd({2, 3, h, w}, rng), Tensor::uniform({2, 2 * k * k, ho, wo}, rng, -1.7, 1.7),
                            rnd({4, 3, k, k}, rng, 0.5)};
                if (bias) {
                    p.input_names.push_back("bias");
                    p.inputs.push_back(rnd({4}, rng));
                }
                kernels::ConvGeometry g{stride, padding, 1};
                p.forward = [g, bias](Inputs in) {
                    return ag::deform_conv2d(in[0], in[1], in[2], bias ? in[3] : nullptr, g);
                };
                return p;
            }};
}

GradCheckCase unary_case(std::string name, std::vector<int> shape, std::function<Var(const Var&)> f) {
    return {std::move(name), [shape, f](std::mt19937_64& rng) {
                GradCheckProblem p;
                p.input_names = {"x"};
                p.inputs = {rnd(shape, rng, 1.5)};
                p.forward = [f](Inputs in) { return f(in[0]); };
                return p;
            }};
}

GradCheckCase channel_case(std::string name, Var (*op)(const Var&, const Var&), bool per_sample, bool positive) {
    return {std::move(name), [=](std::mt19937_64& rng) {
                GradCheckProblem p;
                p.input_names = {"x", "v"};
                Tensor v = positive ? Tensor::uniform({per_sample ? 2 : 1, 3, 1, 1}, rng, 0.5, 2.0)
                                    : rnd({per_sample ? 2 : 1, 3, 1, 1}, rng);
                p.inputs = {rnd({2, 3, 4, 5}, rng), v};
                p.forward = [op](Inputs in) { return op(in[0], in[1]); };
                return p;
            }};
}

}  // namespace

std::vector<GradCheckCase> tensor_gradcheck_cases() {
    std::vector<GradCheckCase> cases;
    cases.push_back(conv_case("conv2d", 3, 4, 3, {1, 1, 1}, true));
    cases.push_back(conv_case("conv2d_strided_grouped", 4, 6, 3, {2, 1, 2}, false));
    cases.push_back(conv_case("conv2d_1x1", 5, 2, 1, {1, 0, 1}, false));
    cases.push_back({"depthwise_conv2d", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"x", "kernels"};
                         p.inputs = {rnd({2, 3, 6, 5}, rng), rnd({2, 3, 3, 3}, rng, 0.5)};
                         p.forward = [](Inputs in) { return ag::depthwise_conv2d(in[0], in[1]); };
                         return p;
                     }});
    cases.push_back(deform_case("deform_conv2d", 1, 1, false));
    cases.push_back(deform_case("deform_conv2d_strided_bias", 2, 1, true));
    cases.push_back(unary_case("sigmoid", {2, 3, 4, 4}, [](const Var& x) { return ag::sigmoid(x); }));
    cases.push_back(unary_case("relu", {2, 3, 4, 4}, [](const Var& x) { return ag::relu(x); }));
    cases.push_back(unary_case("softmax_channels", {2, 5, 3, 3}, [](const Var& x) { return ag::softmax(x, 1); }));
    cases.push_back(unary_case("softmax_spatial", {2, 3, 4, 5}, [](const Var& x) {
        return ag::reshape(ag::softmax(ag::reshape(x, {2, 3, 20}), 2), {2, 3, 4, 5});
    }));
    cases.push_back(unary_case("adaptive_avg_pool", {2, 3, 7, 5},
                               [](const Var& x) { return ag::adaptive_avg_pool(x, 3, 3); }));
    cases.push_back(unary_case("channel_mean", {2, 3, 4, 5}, [](const Var& x) { return ag::channel_mean(x); }));
    cases.push_back(unary_case("channel_std", {2, 3, 4, 5}, [](const Var& x) { return ag::channel_std(x); }));
    cases.push_back({"batch_norm_train", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"x", "gamma", "beta"};
                         p.inputs = {rnd({2, 3, 4, 4}, rng, 2.0), Tensor::uniform({3}, rng, 0.5, 1.5), rnd({3}, rng)};
                         p.forward = [](Inputs in) { return ag::batch_norm(in[0], in[1], in[2], true, nullptr); };
                         return p;
                     }});
    cases.push_back({"batch_norm_eval", [](std::mt19937_64& rng) {
                         auto state = std::make_shared<ops::BatchNormState>();
                         state->running_mean = rnd({3}, rng);
                         state->running_var = Tensor::uniform({3}, rng, 0.5, 2.0);
                         GradCheckProblem p;
                         p.input_names = {"x", "gamma", "beta"};
                         p.inputs = {rnd({2, 3, 4, 4}, rng), Tensor::uniform({3}, rng, 0.5, 1.5), rnd({3}, rng)};
                         p.forward = [state](Inputs in) {
                             return ag::batch_norm(in[0], in[1], in[2], false, state.get());
                         };
                         return p;
                     }});
    cases.push_back(channel_case("add_channel", ag::add_channel, false, false));
    cases.push_back(channel_case("sub_channel", ag::sub_channel, true, false));
    cases.push_back(channel_case("mul_channel", ag::mul_channel, true, false));
    cases.push_back(channel_case("div_channel", ag::div_channel, false, true));
    cases.push_back({"elementwise_add_mul_scale", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"a", "b"};
                         p.inputs = {rnd({2, 3, 3, 3}, rng), rnd({2, 3, 3, 3}, rng)};
                         p.forward = [](Inputs in) {
                             return ag::scale(ag::add(ag::mul(in[0], in[1]), in[0]), -0.7);
                         };
                         return p;
                     }});
    cases.push_back({"concat_channels", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"a", "b"};
                         p.inputs = {rnd({2, 2, 3, 4}, rng), rnd({2, 3, 3, 4}, rng)};
                         p.forward = [](Inputs in) { return ag::sigmoid(ag::concat_channels(in[0], in[1])); };
                         return p;
                     }});
    cases.push_back({"spatial_weighted_sum", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"x", "weights"};
                         p.inputs = {rnd({2, 3, 4, 5}, rng), rnd({2, 1, 4, 5}, rng)};
                         p.forward = [](Inputs in) { return ag::spatial_weighted_sum(in[0], in[1]); };
                         return p;
                     }});
    cases.push_back({"sigmoid_conv2d", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"x", "weight"};
                         p.inputs = {rnd({1, 2, 6, 6}, rng), rnd({3, 2, 3, 3}, rng, 0.5)};
                         p.forward = [](Inputs in) {
                             return ag::sigmoid(ag::conv2d(in[0], in[1], nullptr, {1, 1, 1}));
                         };
                         return p;
                     }});
    return cases;
}

}  // namespace evtrack
