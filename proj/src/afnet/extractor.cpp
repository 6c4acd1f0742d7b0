#include <stdexcept>

#include "evtrack/afnet.hpp"

namespace evtrack::afnet {

namespace {

Tensor to_unit(int width, int height, const std::vector<std::uint8_t>& pixels) {
    Tensor t({1, 1, height, width});
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        t[i] = pixels[i] / 255.0;
    }
    return t;
}

}  // namespace

Tensor image_tensor(const GrayImage& image) { return to_unit(image.width, image.height, image.pixels); }

Tensor event_tensor(const events::EventFrame& frame) { return to_unit(frame.width, frame.height, frame.pixels); }

ag::Var extract_fused_features(const Binding& b, const ag::Var& frame, const ag::Var& event_frame, FusionMode mode,
                               bool train, NormStates* norms) {
    if (!frame->value.same_shape(event_frame->value)) {
        throw std::invalid_argument("frame " + frame->value.shape_string() + " and event frame " +
                                    event_frame->value.shape_string() + " differ in size");
    }
    const Shape4 s = shape4(frame->value, "frame");
    if (s.c != 1 || s.h % 4 != 0 || s.w % 4 != 0) {
        throw std::invalid_argument("extractor expects single-channel inputs with sides divisible by 4, got " +
                                    frame->value.shape_string());
    }
    switch (mode) {
        case FusionMode::EarlyFusion:
            return backbone(b, "bb_f", ag::add(frame, event_frame));
        case FusionMode::MiddleFusion:
            return ag::add(backbone(b, "bb_f", frame), backbone(b, "bb_e", event_frame));
        case FusionMode::AFNet: {
            ag::Var ff = backbone(b, "bb_f", frame);
            ag::Var fe = backbone(b, "bb_e", event_frame);
            MotionAwareOut ma = motion_aware(b, fe);
            StyleOut st = style_transform(ff, ma.features);
            AlignOut da = deformable_align(b, ff, st.transformed, ma.features);
            return cross_correlation_fuse(b, da.aligned, ma.features, train, norms).fused;
        }
    }
    throw std::logic_error("unhandled fusion mode");
}

Tensor extract_fused_features(const AFNetModel& model, const GrayImage& frame, const events::EventFrame& event_frame,
                              FusionMode mode) {
    if (frame.width != event_frame.width || frame.height != event_frame.height) {
        throw std::invalid_argument("frame and event frame differ in size");
    }
    Binding b(model.params, false);
    NormStates norms = model.norms;
    return extract_fused_features(b, ag::constant(image_tensor(frame)), ag::constant(event_tensor(event_frame)), mode,
                                  false, &norms)
        ->value;
}

}  // namespace evtrack::afnet
