#include <cmath>
#include <memory>
#include <stdexcept>

#include "evtrack/tracker.hpp"

namespace evtrack::tracker {

Tensor gaussian_label(int height, int width, const BBox& box, double sigma) {
    const double cu = to_feature(box.center_x());
    const double cv = to_feature(box.center_y());
    Tensor label({1, 1, height, width});
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
            label.at(0, 0, v, u) = std::exp(-d2 / (2.0 * sigma * sigma));
        }
    }
    return label;
}

namespace {

ag::Var hinged_cls(const ag::Var& scores, const Tensor& label, double hinge) {
    const std::size_t m = scores->value.size();
    std::vector<double> residual(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double s = scores->value[i];
        const double y = label[i];
        residual[i] = y <= hinge ? std::max(0.0, s - hinge) : s - y;
        acc += residual[i] * residual[i];
    }
    return ag::make_node(Tensor({1}, acc / static_cast<double>(m)), {scores}, [scores, residual](ag::Node& self) {
        Tensor g = Tensor::zeros_like(scores->value);
        const double scale = 2.0 * self.grad[0] / static_cast<double>(residual.size());
        for (std::size_t i = 0; i < residual.size(); ++i) g[i] = scale * residual[i];
        scores->accumulate(g);
    });
}

ag::Var mse(const ag::Var& pred, const std::vector<double>& target) {
    const std::size_t m = pred->value.size();
    std::vector<double> diff(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        diff[i] = pred->value[i] - target[i];
        acc += diff[i] * diff[i];
    }
    return ag::make_node(Tensor({1}, m ? acc / static_cast<double>(m) : 0.0), {pred}, [pred, diff](ag::Node& self) {
        Tensor g = Tensor::zeros_like(pred->value);
        const double scale = 2.0 * self.grad[0] / static_cast<double>(diff.size());
        for (std::size_t i = 0; i < diff.size(); ++i) g[i] = scale * diff[i];
        pred->accumulate(g);
    });
}

}  // namespace

LossTerms compute_loss(const ag::Var& scores, const Tensor& label, const ag::Var& pred_iou,
                       const std::vector<double>& true_iou, const LossConfig& cfg) {
    if (scores->value.size() != label.size()) {
        throw std::invalid_argument("score map " + scores->value.shape_string() + " and label " +
                                    label.shape_string() + " differ");
    }
    if (pred_iou->value.size() != true_iou.size()) {
        throw std::invalid_argument("predicted and true IoU lists differ in length");
    }
    if (!(cfg.beta >= 0.0)) {
        throw std::invalid_argument("beta must be nonnegative");
    }
    LossTerms t;
    t.cls = hinged_cls(scores, label, cfg.hinge);
    t.bb = mse(pred_iou, true_iou);
    t.total = ag::add(ag::scale(t.cls, cfg.beta), t.bb);
    return t;
}

std::vector<GradCheckCase> tracker_gradcheck_cases() {
    return {{"tracking_loss", [](std::mt19937_64& rng) {
                 auto model = std::make_shared<TrackerModel>(init_tracker({8, 4, 8, 4, 3}, {8}, rng()));
                 Tensor& off = model->net.params.get("da.offset");
                 off = Tensor::randn(off.shape(), rng, 0.3);
                 auto all = std::make_shared<ParamStore>(model->net.params);
                 for (std::size_t i = 0; i < model->head.size(); ++i) {
                     all->add(model->head.names()[i], model->head.values()[i]);
                 }
                 std::uniform_int_distribution<int> pick(0, 2);
                 auto event_like = [&] {
                     Tensor t({1, 1, 16, 16});
                     for (auto& v : t.values()) v = pick(rng) * 127.5 / 255.0;
                     return t;
                 };
                 const Tensor tf = Tensor::uniform({1, 1, 16, 16}, rng, 0.0, 1.0);
                 const Tensor te = event_like();
                 const Tensor sf = Tensor::uniform({1, 1, 16, 16}, rng, 0.0, 1.0);
                 const Tensor se = event_like();
                 const BBox box{4.3, 5.1, 6.0, 5.5};
                 const BBox gt{5.0, 4.2, 6.0, 5.5};
                 const std::vector<BBox> cands = jitter_candidates(gt, 3);
                 std::vector<double> truth;
                 std::vector<Roi> rois;
                 for (int i = 0; i < 4; ++i) {
                     rois.push_back({0, cands[static_cast<std::size_t>(i)]});
                     truth.push_back(eval::iou(cands[static_cast<std::size_t>(i)], gt));
                 }
                 GradCheckProblem p;
                 p.input_names = all->names();
                 p.inputs = all->values();
                 p.forward = [=](const std::vector<ag::Var>& in) {
                     Binding b(*all, in);
                     auto feats = [&](const Tensor& f, const Tensor& e) {
                         return afnet::extract_fused_features(b, ag::constant(f), ag::constant(e),
                                                              afnet::FusionMode::AFNet, true, nullptr);
                     };
                     ag::Var kernel = roi_sample(feats(tf, te), {{0, box}});
                     ag::Var search = feats(sf, se);
                     ag::Var scores = score_windows(search, kernel, box.w, box.h);
                     Tensor label = gaussian_label(4, 4, gt, 1.0);
                     ag::Var pred = predict_iou(b, search, kernel, rois);
                     return compute_loss(scores, label, pred, truth, LossConfig{}).total;
                 };
                 return p;
             }}};
}

}  // namespace evtrack::tracker
