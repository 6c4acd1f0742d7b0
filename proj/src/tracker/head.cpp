#include <cmath>
#include <random>
#include <stdexcept>

#include "evtrack/tracker.hpp"

namespace evtrack::tracker {

TrackerModel init_tracker(const afnet::AFNetConfig& config, const HeadConfig& head, std::uint64_t seed) {
    if (head.hidden < 1) {
        throw std::invalid_argument("IoU head needs a positive hidden width");
    }
    TrackerModel m;
    m.net = afnet::init_afnet(config, seed);
    m.head_config = head;
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    const int d = config.channels * kKernelSize * kKernelSize;
    m.head.add("iou.fc1", Tensor::randn({head.hidden, d, 1, 1}, rng, std::sqrt(2.0 / d)));
    m.head.add("iou.b1", Tensor({head.hidden}, 0.0));
    m.head.add("iou.fc2", Tensor::randn({1, head.hidden, 1, 1}, rng, std::sqrt(1.0 / head.hidden)));
    m.head.add("iou.b2", Tensor({1}, 0.0));
    return m;
}

std::vector<BBox> jitter_candidates(const BBox& prior, std::uint64_t seed) {
    if (!prior.valid()) {
        throw std::invalid_argument("prior box must have positive size");
    }
    std::mt19937_64 rng(seed + 0x243f6a8885a308d3ULL);
    std::uniform_real_distribution<double> shift(-0.25, 0.25);
    std::uniform_real_distribution<double> log_scale(-0.1, 0.1);
    std::vector<BBox> out{prior};
    for (int i = 1; i < kCandidates; ++i) {
        const double dx = shift(rng) * prior.w;
        const double dy = shift(rng) * prior.h;
        const double sw = std::exp(log_scale(rng));
        const double sh = std::exp(log_scale(rng));
        out.push_back(BBox::from_center(prior.center_x() + dx, prior.center_y() + dy, prior.w * sw, prior.h * sh));
    }
    return out;
}

namespace {

/// Repeats a (1, ...) tensor m times along the batch axis.
ag::Var tile_batch(const ag::Var& x, int m) {
    std::vector<int> shape = x->value.shape();
    if (shape[0] != 1) {
        throw std::invalid_argument("tile_batch expects a batch of one");
    }
    shape[0] = m;
    const std::size_t d = x->value.size();
    Tensor out(shape);
    for (int r = 0; r < m; ++r) {
        std::copy_n(x->value.data(), d, out.data() + static_cast<std::size_t>(r) * d);
    }
    return ag::make_node(std::move(out), {x}, [x, m, d](ag::Node& self) {
        Tensor g = Tensor::zeros_like(x->value);
        for (int r = 0; r < m; ++r) {
            for (std::size_t i = 0; i < d; ++i) g[i] += self.grad[static_cast<std::size_t>(r) * d + i];
        }
        x->accumulate(g);
    });
}

}  // namespace

ag::Var predict_iou(const Binding& head, const ag::Var& features, const ag::Var& kernel, const std::vector<Roi>& rois) {
    const int m = static_cast<int>(rois.size());
    const int k = kernel->value.dim(2);
    ag::Var windows = roi_sample(features, rois, k);
    const int d = static_cast<int>(windows->value.size()) / m;
    ag::Var joint = ag::reshape(ag::mul(windows, tile_batch(kernel, m)), {m, d, 1, 1});
    ag::Var hidden = ag::relu(ag::conv2d(joint, head("iou.fc1"), head("iou.b1"), {1, 0, 1}));
    ag::Var logit = ag::conv2d(hidden, head("iou.fc2"), head("iou.b2"), {1, 0, 1});
    return ag::reshape(ag::sigmoid(logit), {m});
}

BBox refine_box(const std::vector<BBox>& candidates, const IouScorer& scorer) {
    if (candidates.empty()) {
        throw std::invalid_argument("refine_box needs candidates");
    }
    const auto scores = scorer(candidates);
    if (scores.size() != candidates.size()) {
        throw std::invalid_argument("scorer returned the wrong number of scores");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return candidates[best];
}

BBox refine_box(const TrackerModel& model, const TemplateState& state, const Tensor& search_features,
                const BBox& prior) {
    Binding head(model.head, false);
    ag::Var features = ag::constant(search_features);
    ag::Var kernel = ag::constant(state.kernel);
    return refine_box(jitter_candidates(prior), [&](const std::vector<BBox>& boxes) {
        std::vector<Roi> rois;
        for (const auto& b : boxes) rois.push_back({0, b});
        ag::Var pred = predict_iou(head, features, kernel, rois);
        return std::vector<double>(pred->value.values().begin(), pred->value.values().end());
    });
}

}  // namespace evtrack::tracker
