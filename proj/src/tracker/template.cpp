#include <cmath>
#include <stdexcept>

#include "evtrack/tracker.hpp"

namespace evtrack::tracker {

namespace {

struct SamplePoint {
    double y, x;
};

std::vector<SamplePoint> sample_points(const BBox& box, int k) {
    std::vector<SamplePoint> pts;
    pts.reserve(static_cast<std::size_t>(k) * k);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            pts.push_back({to_feature(box.y + (i + 0.5) * box.h / k), to_feature(box.x + (j + 0.5) * box.w / k)});
        }
    }
    return pts;
}

}  // namespace

ag::Var roi_sample(const ag::Var& features, const std::vector<Roi>& rois, int k) {
    const Shape4 s = shape4(features->value, "roi features");
    const int m = static_cast<int>(rois.size());
    if (m == 0) {
        throw std::invalid_argument("roi_sample needs at least one box");
    }
    for (const auto& r : rois) {
        if (r.batch < 0 || r.batch >= s.n) {
            throw std::invalid_argument("roi batch index out of range");
        }
    }
    const std::size_t plane = s.plane();
    const std::size_t kk = static_cast<std::size_t>(k) * k;
    Tensor out({m, s.c, k, k});
    for (int r = 0; r < m; ++r) {
        const auto pts = sample_points(rois[r].box, k);
        for (int c = 0; c < s.c; ++c) {
            const double* src = features->value.data() + (static_cast<std::size_t>(rois[r].batch) * s.c + c) * plane;
            double* dst = out.data() + (static_cast<std::size_t>(r) * s.c + c) * kk;
            for (std::size_t p = 0; p < kk; ++p) {
                dst[p] = kernels::bilinear_sample(src, s.h, s.w, pts[p].y, pts[p].x);
            }
        }
    }
    return ag::make_node(std::move(out), {features}, [features, rois, k, s, plane, kk](ag::Node& self) {
        Tensor g = Tensor::zeros_like(features->value);
        for (std::size_t r = 0; r < rois.size(); ++r) {
            const auto pts = sample_points(rois[r].box, k);
            for (int c = 0; c < s.c; ++c) {
                double* dst = g.data() + (static_cast<std::size_t>(rois[r].batch) * s.c + c) * plane;
                const double* go = self.grad.data() + (r * s.c + c) * kk;
                for (std::size_t p = 0; p < kk; ++p) {
                    kernels::bilinear_scatter(dst, s.h, s.w, pts[p].y, pts[p].x, go[p]);
                }
            }
        }
        features->accumulate(g);
    });
}

ag::Var cosine_scores(const ag::Var& windows, const ag::Var& kernel) {
    const int m = windows->value.dim(0);
    const std::size_t d = windows->value.size() / static_cast<std::size_t>(m);
    if (kernel->value.size() != d) {
        throw std::invalid_argument("kernel " + kernel->value.shape_string() + " does not match windows " +
                                    windows->value.shape_string());
    }
    constexpr double kTiny = 1e-12;
    const double* b = kernel->value.data();
    double bb = 0.0;
    for (std::size_t i = 0; i < d; ++i) bb += b[i] * b[i];
    const double nb = std::sqrt(bb);
    Tensor out({m});
    std::vector<double> na(static_cast<std::size_t>(m)), dots(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) {
        const double* a = windows->value.data() + static_cast<std::size_t>(r) * d;
        double aa = 0.0, ab = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            aa += a[i] * a[i];
            ab += a[i] * b[i];
        }
        na[r] = std::sqrt(aa);
        dots[r] = ab;
        const double denom = na[r] * nb;
        out[r] = denom > kTiny ? ab / denom : 0.0;
    }
    Tensor scores = out;
    return ag::make_node(std::move(out), {windows, kernel}, [=](ag::Node& self) {
        Tensor gw = Tensor::zeros_like(windows->value);
        Tensor gk = Tensor::zeros_like(kernel->value);
        for (int r = 0; r < m; ++r) {
            const double denom = na[r] * nb;
            if (denom <= kTiny) continue;
            const double g = self.grad[r];
            const double s = scores[r];
            const double* a = windows->value.data() + static_cast<std::size_t>(r) * d;
            double* ga = gw.data() + static_cast<std::size_t>(r) * d;
            for (std::size_t i = 0; i < d; ++i) {
                ga[i] = g * (b[i] / denom - s * a[i] / (na[r] * na[r]));
                gk[i] += g * (a[i] / denom - s * b[i] / bb);
            }
        }
        if (windows->requires_grad) windows->accumulate(gw);
        if (kernel->requires_grad) kernel->accumulate(gk);
    });
}

ag::Var score_windows(const ag::Var& features, const ag::Var& kernel, double box_w, double box_h) {
    const Shape4 s = shape4(features->value, "search features");
    if (kernel->value.rank() != 4 || kernel->value.dim(1) != s.c) {
        throw std::invalid_argument("template kernel " + kernel->value.shape_string() + " does not match features " +
                                    features->value.shape_string());
    }
    const int k = kernel->value.dim(2);
    std::vector<Roi> rois;
    rois.reserve(static_cast<std::size_t>(s.n) * s.plane());
    for (int n = 0; n < s.n; ++n) {
        for (int v = 0; v < s.h; ++v) {
            for (int u = 0; u < s.w; ++u) {
                rois.push_back({n, BBox::from_center(kFeatureStride * u + 2.0, kFeatureStride * v + 2.0, box_w, box_h)});
            }
        }
    }
    return ag::reshape(cosine_scores(roi_sample(features, rois, k), kernel), {s.n, 1, s.h, s.w});
}

TemplateState init_template(const TrackerModel& model, const GrayImage& frame, const events::EventFrame& event_frame,
                            const BBox& box, afnet::FusionMode fusion) {
    if (!box.valid() || box.x < 0.0 || box.y < 0.0 || box.x + box.w > frame.width ||
        box.y + box.h > frame.height) {
        throw std::invalid_argument("template box lies outside the " + std::to_string(frame.width) + "x" +
                                    std::to_string(frame.height) + " image");
    }
    TemplateState state;
    state.box = box;
    state.features = afnet::extract_fused_features(model.net, frame, event_frame, fusion);
    state.kernel = roi_sample(ag::constant(state.features), {{0, box}})->value;
    return state;
}

ScoreMap classify(const TemplateState& state, const Tensor& search_features) {
    const Shape4 s = shape4(search_features, "search features");
    if (s.n != 1) {
        throw std::invalid_argument("classify expects a single search sample");
    }
    ag::Var scores =
        score_windows(ag::constant(search_features), ag::constant(state.kernel), state.box.w, state.box.h);
    ScoreMap map;
    map.height = s.h;
    map.width = s.w;
    map.scores.assign(scores->value.values().begin(), scores->value.values().end());
    return map;
}

}  // namespace evtrack::tracker
