#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "evtrack/events.hpp"
#include "evtrack/gradcheck.hpp"
#include "evtrack/params.hpp"
#include "evtrack/sequence.hpp"

namespace evtrack::afnet {

enum class FusionMode { AFNet, EarlyFusion, MiddleFusion };

std::string to_string(FusionMode mode);
/// Accepts "afnet", "ef", "mf" (case-insensitive).
FusionMode parse_fusion_mode(std::string_view text);

struct AFNetConfig {
    int channels = 16;   // C, output width of both backbones
    int stem1 = 8;       // first backbone block
    int stem2 = 16;      // second backbone block
    int reduction = 4;   // channel bottleneck C -> C/r -> C
    int kernel = 3;      // K of the offsets and dynamic kernels
    bool operator==(const AFNetConfig&) const = default;
};

void validate_config(const AFNetConfig& config);

/// Running statistics of the two batch-norm layers in the fusion block.
struct NormStates {
    ops::BatchNormState frame;
    ops::BatchNormState event;
};

struct AFNetModel {
    AFNetConfig config;
    ParamStore params;
    NormStates norms;
};

/// He-normal convolution weights, zero offset predictor, BN gamma 1 beta 0.
AFNetModel init_afnet(const AFNetConfig& config, std::uint64_t seed);

/// Three conv3x3 + ReLU blocks, strides 2, 1, 2. `prefix` selects the
/// frame ("bb_f") or event ("bb_e") weights.
ag::Var backbone(const Binding& b, const std::string& prefix, const ag::Var& x);

struct MotionAwareOut {
    ag::Var descriptor;  // F_e^s, (N, C, 1, 1)
    ag::Var gate;        // (N, C, 1, 1), in (0, 1)
    ag::Var features;    // F_e^c
};

/// Spatial softmax attention pools F_e into a per-channel descriptor, whose
/// bottleneck response gates the channels of F_e.
MotionAwareOut motion_aware(const Binding& b, const ag::Var& event_features);

struct StyleOut {
    ag::Var modulated;    // F_f^m
    ag::Var transformed;  // F_f^st
};

/// Motion gate on the frame features followed by adaptive instance
/// normalisation towards the statistics of the gated event features.
StyleOut style_transform(const ag::Var& frame_features, const ag::Var& event_features, double eps = ops::kNormEps);

struct AlignOut {
    ag::Var offsets;
    ag::Var aligned;  // F_f^da
};

AlignOut deformable_align(const Binding& b, const ag::Var& frame_features, const ag::Var& styled,
                          const ag::Var& event_features);

struct FuseOut {
    ag::Var frame_response;  // relu(BN(conv3x3(F_f^da)))
    ag::Var event_response;  // relu(BN(conv3x3(F_e^c)))
    ag::Var event_kernel;    // K_e, (N, C, K, K)
    ag::Var frame_kernel;    // K_f
    ag::Var frame_enhanced;  // F_f^e
    ag::Var event_enhanced;  // F_e^f
    ag::Var fused;           // F_fu
};

/// `train` selects batch statistics (and updates `norms` when non-null)
/// versus running statistics.
FuseOut cross_correlation_fuse(const Binding& b, const ag::Var& aligned, const ag::Var& event_features,
                               bool train, NormStates* norms);

/// Images scaled to [0, 1] as (1, 1, H, W).
Tensor image_tensor(const GrayImage& image);
Tensor event_tensor(const events::EventFrame& frame);

/// Full extractor on (N, 1, H, W) inputs; output (N, C, H/4, W/4).
ag::Var extract_fused_features(const Binding& b, const ag::Var& frame, const ag::Var& event_frame, FusionMode mode,
                               bool train, NormStates* norms);

/// Inference convenience: eval-mode statistics, no gradients.
Tensor extract_fused_features(const AFNetModel& model, const GrayImage& frame, const events::EventFrame& event_frame,
                              FusionMode mode);

/// Gradient-check cases for every block and the three extractor modes.
std::vector<GradCheckCase> afnet_gradcheck_cases();

}  // namespace evtrack::afnet
