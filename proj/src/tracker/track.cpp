#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "evtrack/tracker.hpp"

namespace evtrack::tracker {

std::string to_string(TrackFusion f) {
    switch (f) {
        case TrackFusion::AFNet: return "afnet";
        case TrackFusion::EarlyFusion: return "ef";
        case TrackFusion::MiddleFusion: return "mf";
        case TrackFusion::FrameOnly: return "frame-only";
        case TrackFusion::EventOnly: return "event-only";
    }
    return "afnet";
}

TrackFusion parse_track_fusion(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "frame-only") return TrackFusion::FrameOnly;
    if (lower == "event-only") return TrackFusion::EventOnly;
    if (lower == "afnet" || lower == "ef" || lower == "mf") {
        switch (afnet::parse_fusion_mode(lower)) {
            case afnet::FusionMode::AFNet: return TrackFusion::AFNet;
            case afnet::FusionMode::EarlyFusion: return TrackFusion::EarlyFusion;
            case afnet::FusionMode::MiddleFusion: return TrackFusion::MiddleFusion;
        }
    }
    throw std::invalid_argument("unknown fusion '" + std::string(text) +
                                "' (expected afnet, ef, mf, frame-only or event-only)");
}

namespace {

afnet::FusionMode network_mode(TrackFusion f) {
    switch (f) {
        case TrackFusion::EarlyFusion: return afnet::FusionMode::EarlyFusion;
        case TrackFusion::MiddleFusion: return afnet::FusionMode::MiddleFusion;
        default: return afnet::FusionMode::AFNet;
    }
}

/// Vertex offset of a parabola through three samples, clamped to half a cell.
double parabolic_offset(double left, double mid, double right) {
    const double curvature = left - 2.0 * mid + right;
    if (curvature >= 0.0) {
        return 0.0;
    }
    return std::clamp(0.5 * (left - right) / curvature, -0.5, 0.5);
}

BBox clamp_to_image(BBox b, int width, int height) {
    b.w = std::min(b.w, static_cast<double>(width));
    b.h = std::min(b.h, static_cast<double>(height));
    b.x = std::clamp(b.x, 0.0, width - b.w);
    b.y = std::clamp(b.y, 0.0, height - b.h);
    return b;
}

}  // namespace

eval::TrackResult track_sequence(const TrackerModel& model, const Sequence& seq, const TrackOptions& options) {
    if (seq.frames.empty() || seq.frames.size() != seq.frame_times.size()) {
        throw std::invalid_argument("sequence needs one frame per frame timestamp");
    }
    if (seq.events.sensor_width != seq.sensor_width || seq.events.sensor_height != seq.sensor_height) {
        throw std::invalid_argument("event stream geometry does not match the sequence");
    }
    const int w = seq.sensor_width;
    const int h = seq.sensor_height;
    const auto mode = network_mode(options.fusion);
    const bool drop_events = options.fusion == TrackFusion::FrameOnly;
    const bool drop_frames = options.fusion == TrackFusion::EventOnly;
    const GrayImage gray = GrayImage::filled(w, h, 127);

    auto event_frame = [&](events::Micros start, events::Micros end) {
        return drop_events ? events::EventFrame::neutral(w, h, start, end)
                           : events::aggregate_events(seq.events, start, end, options.mode);
    };
    auto frame = [&](std::size_t i) -> const GrayImage& { return drop_frames ? gray : seq.frames[i]; };

    const events::Micros t0 = seq.frame_times.front();
    const TemplateState state =
        init_template(model, frame(0), event_frame(t0, t0 + seq.schedule.event_offset(1)), seq.init_box, mode);

    eval::TrackResult result;
    result.attribute = seq.attribute;
    BBox prev = seq.init_box;
    for (events::Micros t : seq.event_timestamps()) {
        const auto pairing = events::pair_frame(seq.schedule, t, seq.frame_times);
        const auto [start, end] =
            events::accumulation_window(seq.schedule, seq.frame_times[pairing.frame_index], pairing.n, options.mode);
        const Tensor features = afnet::extract_fused_features(model.net, frame(pairing.frame_index),
                                                              event_frame(start, end), mode);
        const ScoreMap map = classify(state, features);

        int best_u = -1, best_v = -1;
        for (int v = 0; v < map.height; ++v) {
            const double cy = kFeatureStride * v + 2.0;
            if (std::abs(cy - prev.center_y()) > 2.0 * prev.h) continue;
            for (int u = 0; u < map.width; ++u) {
                const double cx = kFeatureStride * u + 2.0;
                if (std::abs(cx - prev.center_x()) > 2.0 * prev.w) continue;
                if (best_u < 0 || map.at(v, u) > map.at(best_v, best_u)) {
                    best_u = u;
                    best_v = v;
                }
            }
        }
        BBox box = prev;
        if (best_u >= 0) {
            double du = 0.0, dv = 0.0;
            if (best_u > 0 && best_u + 1 < map.width) {
                du = parabolic_offset(map.at(best_v, best_u - 1), map.at(best_v, best_u), map.at(best_v, best_u + 1));
            }
            if (best_v > 0 && best_v + 1 < map.height) {
                dv = parabolic_offset(map.at(best_v - 1, best_u), map.at(best_v, best_u), map.at(best_v + 1, best_u));
            }
            const BBox prior = BBox::from_center(kFeatureStride * (best_u + du) + 2.0,
                                                 kFeatureStride * (best_v + dv) + 2.0, prev.w, prev.h);
            if (options.refine) {
                const BBox r = refine_box(model, state, features, prior);
                const double lr = options.scale_lr;
                box = BBox::from_center(r.center_x(), r.center_y(), (1.0 - lr) * prev.w + lr * r.w,
                                        (1.0 - lr) * prev.h + lr * r.h);
            } else {
                box = prior;
            }
        }
        box = clamp_to_image(box, w, h);
        result.boxes.push_back({t, box});
        prev = box;
    }
    return result;
}

}  // namespace evtrack::tracker
