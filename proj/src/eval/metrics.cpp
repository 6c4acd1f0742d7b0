#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "evtrack/eval.hpp"

namespace evtrack::eval {

double iou(const BBox& a, const BBox& b) {
    // Areas from the same edge differences as the overlap keep iou(a, a) == 1.
    const double ar = a.x + a.w, ab = a.y + a.h, br = b.x + b.w, bb = b.y + b.h;
    const double ix = std::max(0.0, std::min(ar, br) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(ab, bb) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = (ar - a.x) * (ab - a.y) + (br - b.x) * (bb - b.y) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double center_error(const BBox& a, const BBox& b) {
    return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

double success_threshold(int k) { return k / 20.0; }

Curves success_precision_curves(const TrackResult& result, const TrackResult& gt) {
    const auto& p = result.boxes;
    const auto& g = gt.boxes;
    const std::size_t common = std::min(p.size(), g.size());
    for (std::size_t i = 0; i < common; ++i) {
        if (p[i].t_us != g[i].t_us) {
            throw std::invalid_argument("timestamp mismatch at row " + std::to_string(i) + ": prediction t=" +
                                        std::to_string(p[i].t_us) + ", ground truth t=" + std::to_string(g[i].t_us));
        }
    }
    if (p.size() != g.size()) {
        throw std::invalid_argument("prediction has " + std::to_string(p.size()) + " rows, ground truth " +
                                    std::to_string(g.size()) + "; first unmatched row " + std::to_string(common));
    }
    Curves c;
    c.frames = p.size();
    c.success.assign(kSuccessSamples, 0.0);
    c.precision.assign(kPrecisionSamples, 0.0);
    if (p.empty()) {
        return c;
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double o = iou(p[i].box, g[i].box);
        const double e = center_error(p[i].box, g[i].box);
        for (int k = 0; k < kSuccessSamples; ++k) {
            if (o > success_threshold(k)) c.success[static_cast<std::size_t>(k)] += 1.0;
        }
        for (int d = 0; d < kPrecisionSamples; ++d) {
            if (e <= d) c.precision[static_cast<std::size_t>(d)] += 1.0;
        }
    }
    const double n = static_cast<double>(p.size());
    for (auto& v : c.success) v /= n;
    for (auto& v : c.precision) v /= n;
    return c;
}

Summary summarize(const Curves& curves, int threshold_px) {
    if (threshold_px < 0 || threshold_px >= kPrecisionSamples) {
        throw std::invalid_argument("RPR threshold must be an integer in [0, 50] px");
    }
    if (curves.success.size() != kSuccessSamples || curves.precision.size() != kPrecisionSamples) {
        throw std::invalid_argument("curves have the wrong number of samples");
    }
    Summary s;
    s.curves = curves;
    double acc = 0.0;
    for (double v : curves.success) acc += v;
    s.rsr = acc / kSuccessSamples;
    s.rpr = curves.precision[static_cast<std::size_t>(threshold_px)];
    s.op50 = curves.success[10];
    s.op75 = curves.success[15];
    return s;
}

namespace {

/// Frame-weighted mean of curves.
Curves pool(const std::vector<Curves>& parts) {
    Curves out;
    out.success.assign(kSuccessSamples, 0.0);
    out.precision.assign(kPrecisionSamples, 0.0);
    for (const auto& c : parts) {
        for (int k = 0; k < kSuccessSamples; ++k) out.success[k] += c.success[k] * static_cast<double>(c.frames);
        for (int d = 0; d < kPrecisionSamples; ++d) out.precision[d] += c.precision[d] * static_cast<double>(c.frames);
        out.frames += c.frames;
    }
    if (out.frames > 0) {
        for (auto& v : out.success) v /= static_cast<double>(out.frames);
        for (auto& v : out.precision) v /= static_cast<double>(out.frames);
    }
    return out;
}

}  // namespace

MetricsReport attribute_breakdown(const std::vector<std::pair<TrackResult, TrackResult>>& runs, int threshold_px) {
    MetricsReport report;
    report.rpr_threshold = threshold_px;
    report.sequences = runs.size();
    std::vector<Curves> all;
    std::map<ScenarioKind, std::vector<Curves>> groups;
    for (const auto& [pred, gt] : runs) {
        Curves c = success_precision_curves(pred, gt);
        auto tag = pred.attribute ? pred.attribute : gt.attribute;
        if (tag) {
            groups[*tag].push_back(c);
        }
        all.push_back(std::move(c));
    }
    report.overall = summarize(pool(all), threshold_px);
    for (const auto& [kind, parts] : groups) {
        report.attributes[kind] = summarize(pool(parts), threshold_px);
    }
    return report;
}

TrackResult interpolate_boxes_linear(const TrackResult& low, const std::vector<std::int64_t>& times) {
    if (low.boxes.empty()) {
        throw std::invalid_argument("interpolation needs at least one source box");
    }
    const auto& src = low.boxes;
    for (std::size_t i = 1; i < src.size(); ++i) {
        if (src[i].t_us <= src[i - 1].t_us) {
            throw std::invalid_argument("source timestamps must be strictly increasing");
        }
    }
    TrackResult out;
    out.attribute = low.attribute;
    out.boxes.reserve(times.size());
    for (std::int64_t t : times) {
        auto hi = std::lower_bound(src.begin(), src.end(), t,
                                   [](const TimedBox& b, std::int64_t v) { return b.t_us < v; });
        BBox box;
        if (hi == src.begin()) {
            box = src.front().box;
        } else if (hi == src.end()) {
            box = src.back().box;
        } else if (hi->t_us == t) {
            box = hi->box;
        } else {
            const auto& a = *(hi - 1);
            const auto& b = *hi;
            const double u = static_cast<double>(t - a.t_us) / static_cast<double>(b.t_us - a.t_us);
            box = {a.box.x + u * (b.box.x - a.box.x), a.box.y + u * (b.box.y - a.box.y),
                   a.box.w + u * (b.box.w - a.box.w), a.box.h + u * (b.box.h - a.box.h)};
        }
        out.boxes.push_back({t, box});
    }
    return out;
}

TrackResult subsample_at_rate(const TrackResult& dense, int rate_hz) {
    if (rate_hz <= 0 || 1000000 % rate_hz != 0) {
        throw std::invalid_argument("rate must divide one second into whole microseconds");
    }
    if (dense.boxes.empty()) {
        throw std::invalid_argument("nothing to subsample");
    }
    const std::int64_t period = 1000000 / rate_hz;
    const auto& src = dense.boxes;
    TrackResult out;
    out.attribute = dense.attribute;
    for (std::int64_t t = 0; t <= src.back().t_us; t += period) {
        auto hi = std::lower_bound(src.begin(), src.end(), t,
                                   [](const TimedBox& b, std::int64_t v) { return b.t_us < v; });
        const TimedBox* pick = nullptr;
        if (hi == src.begin()) {
            pick = &*hi;
        } else if (hi == src.end()) {
            pick = &src.back();
        } else {
            const auto& lo = *(hi - 1);
            pick = (hi->t_us - t < t - lo.t_us) ? &*hi : &lo;
        }
        if (out.boxes.empty() || out.boxes.back().t_us != pick->t_us) {
            out.boxes.push_back(*pick);
        }
    }
    return out;
}

}  // namespace evtrack::eval
