#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "evtrack/afnet.hpp"

namespace evtrack::afnet {

std::string to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::AFNet: return "afnet";
        case FusionMode::EarlyFusion: return "ef";
        case FusionMode::MiddleFusion: return "mf";
    }
    return "afnet";
}

FusionMode parse_fusion_mode(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "afnet") return FusionMode::AFNet;
    if (lower == "ef") return FusionMode::EarlyFusion;
    if (lower == "mf") return FusionMode::MiddleFusion;
    throw std::invalid_argument("unknown fusion mode '" + std::string(text) + "' (expected afnet, ef or mf)");
}

void validate_config(const AFNetConfig& c) {
    if (c.channels < 1 || c.stem1 < 1 || c.stem2 < 1) {
        throw std::invalid_argument("channel widths must be positive");
    }
    if (c.reduction < 1 || c.channels % c.reduction != 0) {
        throw std::invalid_argument("reduction ratio must divide the channel count");
    }
    if (c.kernel < 1 || c.kernel % 2 == 0) {
        throw std::invalid_argument("kernel size must be odd");
    }
}

namespace {

Tensor he_normal(std::vector<int> shape, std::mt19937_64& rng) {
    const int fan_in = shape[1] * shape[2] * shape[3];
    return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / fan_in));
}

Tensor xavier_normal(std::vector<int> shape, std::mt19937_64& rng) {
    const int fan_in = shape[1] * shape[2] * shape[3];
    const int fan_out = shape[0] * shape[2] * shape[3];
    return Tensor::randn(std::move(shape), rng, std::sqrt(2.0 / (fan_in + fan_out)));
}

ops::BatchNormState fresh_norm(int channels) {
    return {Tensor({channels}, 0.0), Tensor({channels}, 1.0), 0.1};
}

const kernels::ConvGeometry kSame3{1, 1, 1};
const kernels::ConvGeometry kPoint{1, 0, 1};

ag::Var conv(const Binding& b, const std::string& name, const ag::Var& x, kernels::ConvGeometry g) {
    return ag::conv2d(x, b(name), nullptr, g);
}

}  // namespace

AFNetModel init_afnet(const AFNetConfig& c, std::uint64_t seed) {
    validate_config(c);
    std::mt19937_64 rng(seed);
    AFNetModel m;
    m.config = c;
    auto& p = m.params;
    const int C = c.channels;
    const int K = c.kernel;
    for (const std::string prefix : {"bb_f", "bb_e"}) {
        p.add(prefix + ".conv1", he_normal({c.stem1, 1, 3, 3}, rng));
        p.add(prefix + ".conv2", he_normal({c.stem2, c.stem1, 3, 3}, rng));
        p.add(prefix + ".conv3", he_normal({C, c.stem2, 3, 3}, rng));
    }
    p.add("ma.logits", xavier_normal({1, C, 1, 1}, rng));
    p.add("ma.squeeze", xavier_normal({C / c.reduction, C, 1, 1}, rng));
    p.add("ma.excite", xavier_normal({C, C / c.reduction, 1, 1}, rng));
    p.add("da.reduce", xavier_normal({C, 2 * C, 1, 1}, rng));
    p.add("da.offset", Tensor({2 * K * K, C, 3, 3}, 0.0));
    p.add("da.deform", he_normal({C, C, K, K}, rng));
    p.add("cf.frame_conv", he_normal({C, C, 3, 3}, rng));
    p.add("cf.frame_gamma", Tensor({C}, 1.0));
    p.add("cf.frame_beta", Tensor({C}, 0.0));
    p.add("cf.event_conv", he_normal({C, C, 3, 3}, rng));
    p.add("cf.event_gamma", Tensor({C}, 1.0));
    p.add("cf.event_beta", Tensor({C}, 0.0));
    p.add("cf.frame_kernel", xavier_normal({C, C, 3, 3}, rng));
    p.add("cf.event_kernel", xavier_normal({C, C, 3, 3}, rng));
    p.add("cf.frame_out", xavier_normal({C, C, 1, 1}, rng));
    p.add("cf.event_out", xavier_normal({C, C, 1, 1}, rng));
    p.add("cf.fuse", xavier_normal({C, 2 * C, 1, 1}, rng));
    m.norms = {fresh_norm(C), fresh_norm(C)};
    return m;
}

ag::Var backbone(const Binding& b, const std::string& prefix, const ag::Var& x) {
    ag::Var h = ag::relu(conv(b, prefix + ".conv1", x, {2, 1, 1}));
    h = ag::relu(conv(b, prefix + ".conv2", h, kSame3));
    return ag::relu(conv(b, prefix + ".conv3", h, {2, 1, 1}));
}

MotionAwareOut motion_aware(const Binding& b, const ag::Var& fe) {
    const Shape4 s = shape4(fe->value, "event features");
    ag::Var logits = conv(b, "ma.logits", fe, kPoint);
    ag::Var attention = ag::reshape(ag::softmax(ag::reshape(logits, {s.n, 1, s.h * s.w}), 2), {s.n, 1, s.h, s.w});
    MotionAwareOut out;
    out.descriptor = ag::spatial_weighted_sum(fe, attention);
    out.gate = ag::sigmoid(conv(b, "ma.excite", conv(b, "ma.squeeze", out.descriptor, kPoint), kPoint));
    out.features = ag::mul_channel(fe, out.gate);
    return out;
}

StyleOut style_transform(const ag::Var& ff, const ag::Var& fec, double eps) {
    if (!ff->value.same_shape(fec->value)) {
        throw std::invalid_argument("style_transform: frame features " + ff->value.shape_string() +
                                    " vs event features " + fec->value.shape_string());
    }
    StyleOut out;
    out.modulated = ag::add(ag::mul(ag::sigmoid(fec), ff), ff);
    ag::Var centered = ag::sub_channel(out.modulated, ag::channel_mean(out.modulated));
    ag::Var normalized = ag::div_channel(centered, ag::channel_std(out.modulated, eps));
    out.transformed = ag::add_channel(ag::mul_channel(normalized, ag::channel_std(fec, eps)), ag::channel_mean(fec));
    return out;
}

AlignOut deformable_align(const Binding& b, const ag::Var& ff, const ag::Var& fst, const ag::Var& fec) {
    if (!ff->value.same_shape(fst->value) || !ff->value.same_shape(fec->value)) {
        throw std::invalid_argument("deformable_align: feature shapes differ");
    }
    AlignOut out;
    ag::Var reduced = conv(b, "da.reduce", ag::concat_channels(fec, fst), kPoint);
    out.offsets = conv(b, "da.offset", reduced, kSame3);
    const int k = b("da.deform")->value.dim(2);
    out.aligned = ag::deform_conv2d(ff, out.offsets, b("da.deform"), nullptr, {1, k / 2, 1});
    return out;
}

FuseOut cross_correlation_fuse(const Binding& b, const ag::Var& fda, const ag::Var& fec, bool train,
                               NormStates* norms) {
    if (!fda->value.same_shape(fec->value)) {
        throw std::invalid_argument("cross_correlation_fuse: feature shapes differ");
    }
    const int k = b("da.deform")->value.dim(2);
    FuseOut out;
    out.frame_response = ag::relu(ag::batch_norm(conv(b, "cf.frame_conv", fda, kSame3), b("cf.frame_gamma"),
                                                 b("cf.frame_beta"), train, norms ? &norms->frame : nullptr));
    out.event_response = ag::relu(ag::batch_norm(conv(b, "cf.event_conv", fec, kSame3), b("cf.event_gamma"),
                                                 b("cf.event_beta"), train, norms ? &norms->event : nullptr));
    out.event_kernel = conv(b, "cf.event_kernel", ag::adaptive_avg_pool(fec, k, k), kSame3);
    out.frame_kernel = conv(b, "cf.frame_kernel", ag::adaptive_avg_pool(fda, k, k), kSame3);
    out.frame_enhanced = ag::add(ag::depthwise_conv2d(out.frame_response, out.event_kernel), out.frame_response);
    out.event_enhanced = ag::add(ag::depthwise_conv2d(out.event_response, out.frame_kernel), out.event_response);
    out.fused = conv(b, "cf.fuse",
                     ag::concat_channels(conv(b, "cf.frame_out", out.frame_enhanced, kPoint),
                                         conv(b, "cf.event_out", out.event_enhanced, kPoint)),
                     kPoint);
    return out;
}

}  // namespace evtrack::afnet
