#include <memory>

#include "evtrack/afnet.hpp"

namespace evtrack::afnet {

namespace {

using Inputs = const std::vector<ag::Var>&;

const AFNetConfig kToy{8, 4, 8, 4, 3};

/// Problem over the given features plus every model parameter. The store is
/// shared with the forward closure so Binding can resolve names.
GradCheckProblem with_params(std::mt19937_64& rng, std::vector<std::string> feature_names,
                             std::vector<Tensor> features, double offset_scale,
                             std::function<ag::Var(const std::vector<ag::Var>&, const Binding&)> body) {
    auto model = std::make_shared<AFNetModel>(init_afnet(kToy, rng()));
    if (offset_scale > 0.0) {
        Tensor& w = model->params.get("da.offset");
        w = Tensor::randn(w.shape(), rng, offset_scale);
    }
    // Non-trivial norm affine parameters so their gradients are exercised.
    for (const char* name : {"cf.frame_gamma", "cf.event_gamma"}) {
        Tensor& g = model->params.get(name);
        g = Tensor::uniform(g.shape(), rng, 0.5, 1.5);
    }
    for (const char* name : {"cf.frame_beta", "cf.event_beta"}) {
        Tensor& g = model->params.get(name);
        g = Tensor::randn(g.shape(), rng, 0.3);
    }
    GradCheckProblem p;
    const std::size_t nf = features.size();
    p.input_names = std::move(feature_names);
    p.inputs = std::move(features);
    for (std::size_t i = 0; i < model->params.size(); ++i) {
        p.input_names.push_back(model->params.names()[i]);
        p.inputs.push_back(model->params.values()[i]);
    }
    p.forward = [model, nf, body](Inputs in) {
        std::vector<ag::Var> feats(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(nf));
        Binding b(model->params, std::vector<ag::Var>(in.begin() + static_cast<std::ptrdiff_t>(nf), in.end()));
        return body(feats, b);
    };
    return p;
}

Tensor features(std::mt19937_64& rng) { return Tensor::randn({2, kToy.channels, 6, 6}, rng); }

}  // namespace

std::vector<GradCheckCase> afnet_gradcheck_cases() {
    std::vector<GradCheckCase> cases;
    cases.push_back({"motion_aware", [](std::mt19937_64& rng) {
                         return with_params(rng, {"F_e"}, {features(rng)}, 0.0,
                                            [](Inputs f, const Binding& b) { return motion_aware(b, f[0]).features; });
                     }});
    cases.push_back({"style_transform", [](std::mt19937_64& rng) {
                         GradCheckProblem p;
                         p.input_names = {"F_f", "F_e_c"};
                         p.inputs = {features(rng), features(rng)};
                         p.forward = [](Inputs in) { return style_transform(in[0], in[1]).transformed; };
                         return p;
                     }});
    cases.push_back({"deformable_align", [](std::mt19937_64& rng) {
                         return with_params(rng, {"F_f", "F_f_st", "F_e_c"},
                                            {features(rng), features(rng), features(rng)}, 0.3,
                                            [](Inputs f, const Binding& b) {
                                                return deformable_align(b, f[0], f[1], f[2]).aligned;
                                            });
                     }});
    cases.push_back({"cross_correlation_fuse", [](std::mt19937_64& rng) {
                         return with_params(rng, {"F_f_da", "F_e_c"}, {features(rng), features(rng)}, 0.0,
                                            [](Inputs f, const Binding& b) {
                                                return cross_correlation_fuse(b, f[0], f[1], true, nullptr).fused;
                                            });
                     }});
    for (FusionMode mode : {FusionMode::AFNet, FusionMode::EarlyFusion, FusionMode::MiddleFusion}) {
        cases.push_back({"extractor_" + to_string(mode), [mode](std::mt19937_64& rng) {
                             Tensor frame = Tensor::uniform({1, 1, 16, 16}, rng, 0.0, 1.0);
                             Tensor events({1, 1, 16, 16});
                             std::uniform_int_distribution<int> pick(0, 2);
                             for (auto& v : events.values()) v = pick(rng) * 127.5 / 255.0;
                             return with_params(rng, {"frame", "event_frame"}, {frame, events}, 0.3,
                                                [mode](Inputs f, const Binding& b) {
                                                    return extract_fused_features(b, f[0], f[1], mode, true,
                                                                                  nullptr);
                                                });
                         }});
    }
    return cases;
}

}  // namespace evtrack::afnet
