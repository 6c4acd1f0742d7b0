#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "evtrack/checkpoint.hpp"
#include "evtrack/io_util.hpp"
#include "evtrack/simulator.hpp"
#include "evtrack/tracker.hpp"

namespace evtrack::tracker {

namespace {

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum class Inputs { Full, NoEvents, NoFrame };

/// Everything one search sample needs, with substitutions applied.
struct Draw {
    Tensor frame;
    Tensor events;
    BBox gt;
};

struct TemplateInputs {
    Tensor frame;
    Tensor events;
    BBox box;
};

TemplateInputs template_inputs(const Sequence& seq, Inputs inputs) {
    const int w = seq.sensor_width, h = seq.sensor_height;
    const events::Micros t0 = seq.frame_times.front();
    const events::Micros t1 = t0 + seq.schedule.event_offset(1);
    TemplateInputs out;
    out.frame = afnet::image_tensor(inputs == Inputs::NoFrame ? GrayImage::filled(w, h, 127) : seq.frames.front());
    out.events = afnet::event_tensor(inputs == Inputs::NoEvents ? events::EventFrame::neutral(w, h, t0, t1)
                                                                 : events::aggregate_events(seq.events, t0, t1));
    out.box = seq.init_box;
    return out;
}

/// Target box at the timestamp of frame i.
BBox box_at_frame(const Sequence& seq, std::size_t i) {
    if (i == 0) return seq.init_box;
    const TimedBox& b = seq.ground_truth.at(i * static_cast<std::size_t>(seq.schedule.ratio()) - 1);
    if (b.t_us != seq.frame_times[i]) {
        throw std::logic_error("ground truth is not on the event-frame grid");
    }
    return b.box;
}

Draw draw_search(const Sequence& seq, std::size_t gt_index, events::AccumulationMode mode, Inputs inputs) {
    const int w = seq.sensor_width, h = seq.sensor_height;
    const TimedBox& target = seq.ground_truth.at(gt_index);
    const auto pairing = events::pair_frame(seq.schedule, target.t_us, seq.frame_times);
    const auto [start, end] =
        events::accumulation_window(seq.schedule, seq.frame_times[pairing.frame_index], pairing.n, mode);
    Draw d;
    d.frame = afnet::image_tensor(inputs == Inputs::NoFrame ? GrayImage::filled(w, h, 127)
                                                            : seq.frames[pairing.frame_index]);
    d.events = afnet::event_tensor(inputs == Inputs::NoEvents ? events::EventFrame::neutral(w, h, start, end)
                                                               : events::aggregate_events(seq.events, start, end, mode));
    // A draw without events is labelled with what its frame shows.
    d.gt = inputs == Inputs::NoEvents ? box_at_frame(seq, pairing.frame_index) : target.box;
    return d;
}

Tensor stack(const std::vector<const Tensor*>& parts) {
    std::vector<int> shape = parts.front()->shape();
    shape[0] = static_cast<int>(parts.size());
    Tensor out(shape);
    std::size_t pos = 0;
    for (const Tensor* p : parts) {
        std::copy_n(p->data(), p->size(), out.data() + pos);
        pos += p->size();
    }
    return out;
}

/// Jitter table around a prior perturbed in centre and size.
std::vector<BBox> training_candidates(const BBox& gt, std::mt19937_64& rng) {
    std::normal_distribution<double> shift(0.0, 0.2);
    std::normal_distribution<double> log_scale(0.0, 0.2);
    const double cx = gt.center_x() + shift(rng) * gt.w;
    const double cy = gt.center_y() + shift(rng) * gt.h;
    const double w = gt.w * std::exp(log_scale(rng));
    const double h = gt.h * std::exp(log_scale(rng));
    return jitter_candidates(BBox::from_center(cx, cy, w, h), rng());
}

struct Adam {
    std::vector<Tensor> m, v;
    int t = 0;
};

double global_norm(const std::vector<Tensor>& grads) {
    double acc = 0.0;
    for (const auto& g : grads) acc += g.dot(g);
    return std::sqrt(acc);
}

}  // namespace

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json scen = nlohmann::json::array();
    for (auto k : c.scenarios) scen.push_back(to_string(k));
    return {{"seed", c.seed},
            {"epochs", c.epochs},
            {"batches_per_epoch", c.batches_per_epoch},
            {"batch_size", c.batch_size},
            {"step", c.step},
            {"clip", c.clip},
            {"optimizer", c.optimizer},
            {"beta", c.loss.beta},
            {"hinge", c.loss.hinge},
            {"label_sigma", c.loss.label_sigma},
            {"scenarios", scen},
            {"sequences_per_scenario", c.sequences_per_scenario},
            {"drop_events", c.drop_events},
            {"drop_frame", c.drop_frame},
            {"architecture", afnet::config_to_json(c.net)},
            {"head_hidden", c.head.hidden}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    static const char* known[] = {"seed",      "epochs",      "batches_per_epoch", "batch_size",
                                  "step",      "clip",        "optimizer",         "beta",
                                  "hinge",     "label_sigma", "scenarios",         "sequences_per_scenario",
                                  "drop_events", "drop_frame", "architecture",     "head_hidden"};
    if (!j.is_object()) {
        throw std::invalid_argument("training config must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw std::invalid_argument("unknown training config key '" + key + "'");
        }
    }
    if (!j.contains("seed")) {
        throw std::invalid_argument("training config needs a seed");
    }
    TrainConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epochs = j.value("epochs", c.epochs);
    c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.step = j.value("step", c.step);
    c.clip = j.value("clip", c.clip);
    c.optimizer = j.value("optimizer", c.optimizer);
    c.loss.beta = j.value("beta", c.loss.beta);
    c.loss.hinge = j.value("hinge", c.loss.hinge);
    c.loss.label_sigma = j.value("label_sigma", c.loss.label_sigma);
    if (j.contains("scenarios")) {
        c.scenarios.clear();
        for (const auto& s : j.at("scenarios")) c.scenarios.push_back(parse_scenario_kind(s.get<std::string>().c_str()));
    }
    c.sequences_per_scenario = j.value("sequences_per_scenario", c.sequences_per_scenario);
    c.drop_events = j.value("drop_events", c.drop_events);
    c.drop_frame = j.value("drop_frame", c.drop_frame);
    if (j.contains("architecture")) c.net = afnet::config_from_json(j.at("architecture"));
    c.head.hidden = j.value("head_hidden", c.head.hidden);
    if (c.epochs < 1 || c.batches_per_epoch < 1 || c.batch_size < 1 || c.sequences_per_scenario < 1) {
        throw std::invalid_argument("epochs, batches, batch size and sequence count must be positive");
    }
    if (c.optimizer != "gd" && c.optimizer != "adam") {
        throw std::invalid_argument("optimizer must be gd or adam");
    }
    if (!(c.step > 0.0) || !(c.clip > 0.0) || !(c.loss.beta >= 0.0)) {
        throw std::invalid_argument("step and clip must be positive, beta nonnegative");
    }
    if (c.drop_events < 0.0 || c.drop_frame < 0.0 || c.drop_events + c.drop_frame > 1.0) {
        throw std::invalid_argument("dropout probabilities must be nonnegative and sum to at most 1");
    }
    if (c.scenarios.empty()) {
        throw std::invalid_argument("training needs at least one scenario");
    }
    return c;
}

std::vector<Sequence> training_set(const TrainConfig& cfg) {
    std::vector<Sequence> out;
    std::uint64_t index = 0;
    for (auto kind : cfg.scenarios) {
        for (int s = 0; s < cfg.sequences_per_scenario; ++s) {
            const std::uint64_t seed = mix(cfg.seed * 0x100000001b3ULL + index++) >> 16;
            out.push_back(sim::simulate_sequence(sim::make_scenario(kind, seed)));
        }
    }
    return out;
}

TrainResult train(const TrainConfig& cfg, const std::function<void(const EpochLog&)>& progress) {
    return train(cfg, training_set(cfg), progress);
}

TrainResult train(const TrainConfig& cfg, const std::vector<Sequence>& dataset,
                  const std::function<void(const EpochLog&)>& progress) {
    if (dataset.empty()) {
        throw std::invalid_argument("training needs at least one sequence");
    }
    TrainResult result;
    result.model = init_tracker(cfg.net, cfg.head, cfg.seed);
    TrackerModel& model = result.model;
    std::mt19937_64 rng(mix(cfg.seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // One store over the extractor and head so the optimizer sees a flat list.
    ParamStore all = model.net.params;
    for (std::size_t i = 0; i < model.head.size(); ++i) all.add(model.head.names()[i], model.head.values()[i]);
    Adam adam;
    for (const auto& v : all.values()) {
        adam.m.push_back(Tensor::zeros_like(v));
        adam.v.push_back(Tensor::zeros_like(v));
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochLog log;
        log.epoch = epoch;
        for (int batch = 0; batch < cfg.batches_per_epoch; ++batch) {
            const Sequence& seq = dataset[rng() % dataset.size()];
            const double r = unit(rng);
            const Inputs inputs = r < cfg.drop_events ? Inputs::NoEvents
                                  : r < cfg.drop_events + cfg.drop_frame ? Inputs::NoFrame
                                                                         : Inputs::Full;
            const auto mode = (rng() & 1) ? events::AccumulationMode::SinceLastEventFrame
                                          : events::AccumulationMode::SinceLastIntensityFrame;
            const TemplateInputs tmpl = template_inputs(seq, inputs);
            std::vector<Draw> draws;
            for (int b = 0; b < cfg.batch_size; ++b) {
                draws.push_back(draw_search(seq, rng() % seq.ground_truth.size(), mode, inputs));
            }
            std::vector<const Tensor*> frames, evs;
            for (const auto& d : draws) {
                frames.push_back(&d.frame);
                evs.push_back(&d.events);
            }

            Binding bind(all, true);
            ag::Var tf = afnet::extract_fused_features(bind, ag::constant(tmpl.frame), ag::constant(tmpl.events),
                                                       afnet::FusionMode::AFNet, true, &model.net.norms);
            ag::Var kernel = roi_sample(tf, {{0, tmpl.box}});
            ag::Var search = afnet::extract_fused_features(bind, ag::constant(stack(frames)), ag::constant(stack(evs)),
                                                           afnet::FusionMode::AFNet, true, &model.net.norms);
            const Shape4 fs = shape4(search->value);
            ag::Var scores = score_windows(search, kernel, tmpl.box.w, tmpl.box.h);
            std::vector<const Tensor*> label_parts;
            std::vector<Tensor> labels;
            std::vector<Roi> rois;
            std::vector<double> truth;
            for (int b = 0; b < cfg.batch_size; ++b) {
                labels.push_back(gaussian_label(fs.h, fs.w, draws[b].gt, cfg.loss.label_sigma));
                for (const auto& c : training_candidates(draws[b].gt, rng)) {
                    rois.push_back({b, c});
                    truth.push_back(eval::iou(c, draws[b].gt));
                }
            }
            for (const auto& l : labels) label_parts.push_back(&l);
            ag::Var pred = predict_iou(bind, search, kernel, rois);
            LossTerms loss = compute_loss(scores, stack(label_parts), pred, truth, cfg.loss);
            const double value = loss.total->value[0];
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << batch
                    << " (step " << cfg.step << ", optimizer " << cfg.optimizer << ")";
                throw std::runtime_error(msg.str());
            }
            ag::backward(loss.total);
            std::vector<Tensor> grads = bind.gradients();
            const double norm = global_norm(grads);
            if (!std::isfinite(norm)) {
                throw std::runtime_error("training diverged: non-finite gradient at epoch " + std::to_string(epoch));
            }
            const double factor = norm > cfg.clip ? cfg.clip / norm : 1.0;
            if (cfg.optimizer == "adam") {
                ++adam.t;
                const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double c1 = 1.0 - std::pow(b1, adam.t), c2 = 1.0 - std::pow(b2, adam.t);
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    Tensor& p = all.values()[i];
                    for (std::size_t j = 0; j < p.size(); ++j) {
                        const double g = grads[i][j] * factor;
                        adam.m[i][j] = b1 * adam.m[i][j] + (1.0 - b1) * g;
                        adam.v[i][j] = b2 * adam.v[i][j] + (1.0 - b2) * g * g;
                        p[j] -= cfg.step * (adam.m[i][j] / c1) / (std::sqrt(adam.v[i][j] / c2) + eps);
                    }
                }
            } else {
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    grads[i].scale_(-cfg.step * factor);
                    all.values()[i].add_(grads[i]);
                }
            }
            log.loss += value;
            log.cls += loss.cls->value[0];
            log.bb += loss.bb->value[0];
        }
        log.loss /= cfg.batches_per_epoch;
        log.cls /= cfg.batches_per_epoch;
        log.bb /= cfg.batches_per_epoch;
        result.log.push_back(log);
        if (progress) progress(log);
    }
    for (std::size_t i = 0; i < model.net.params.size(); ++i) model.net.params.values()[i] = all.values()[i];
    for (std::size_t i = 0; i < model.head.size(); ++i) {
        model.head.values()[i] = all.values()[model.net.params.size() + i];
    }
    return result;
}

ProbeStats evaluate_probes(const TrackerModel& model, const std::vector<Sequence>& sequences, int samples,
                           std::uint64_t seed) {
    ProbeStats stats;
    if (sequences.empty() || samples < 1) return stats;
    std::mt19937_64 rng(mix(seed));
    Binding head(model.head, false);
    std::size_t iou_count = 0;
    for (int s = 0; s < samples; ++s) {
        const Sequence& seq = sequences[rng() % sequences.size()];
        const TemplateInputs tmpl = template_inputs(seq, Inputs::Full);
        const Draw d = draw_search(seq, rng() % seq.ground_truth.size(), events::AccumulationMode::SinceLastIntensityFrame,
                                   Inputs::Full);
        afnet::NormStates norms = model.net.norms;
        Binding net(model.net.params, false);
        Tensor kernel = roi_sample(afnet::extract_fused_features(net, ag::constant(tmpl.frame), ag::constant(tmpl.events),
                                                                 afnet::FusionMode::AFNet, false, &norms),
                                   {{0, tmpl.box}})
                            ->value;
        ag::Var search = afnet::extract_fused_features(net, ag::constant(d.frame), ag::constant(d.events),
                                                       afnet::FusionMode::AFNet, false, &norms);
        ag::Var scores = score_windows(search, ag::constant(kernel), tmpl.box.w, tmpl.box.h);
        const Shape4 fs = shape4(search->value);
        std::size_t best = 0;
        for (std::size_t i = 1; i < scores->value.size(); ++i) {
            if (scores->value[i] > scores->value[best]) best = i;
        }
        const double du = static_cast<double>(best % fs.w) - to_feature(d.gt.center_x());
        const double dv = static_cast<double>(best / fs.w) - to_feature(d.gt.center_y());
        const double err = std::hypot(du, dv);
        stats.mean_peak_error += err;
        if (err <= 1.0) stats.peak_hit_rate += 1.0;
        std::vector<Roi> rois;
        std::vector<double> truth;
        for (const auto& c : training_candidates(d.gt, rng)) {
            rois.push_back({0, c});
            truth.push_back(eval::iou(c, d.gt));
        }
        ag::Var pred = predict_iou(head, search, ag::constant(kernel), rois);
        for (std::size_t i = 0; i < truth.size(); ++i) stats.iou_mae += std::abs(pred->value[i] - truth[i]);
        iou_count += truth.size();
    }
    stats.samples = samples;
    stats.peak_hit_rate /= samples;
    stats.mean_peak_error /= samples;
    stats.iou_mae /= static_cast<double>(iou_count);
    return stats;
}

void save_checkpoint(const std::filesystem::path& dir, const TrainResult& result, const TrainConfig& cfg) {
    ParamStore tensors;
    afnet::export_model(result.model.net, tensors);
    for (std::size_t i = 0; i < result.model.head.size(); ++i) {
        tensors.add(result.model.head.names()[i], result.model.head.values()[i]);
    }
    nlohmann::json meta;
    meta["format"] = "evtrack-checkpoint-1";
    meta["architecture"] = afnet::config_to_json(result.model.net.config);
    meta["head_hidden"] = result.model.head_config.hidden;
    meta["seed"] = cfg.seed;
    meta["train_config"] = train_config_to_json(cfg);
    write_checkpoint(dir, meta, tensors);
    std::string csv = "epoch,loss,cls,bb\n";
    for (const auto& e : result.log) {
        csv += std::to_string(e.epoch) + "," + format_double(e.loss) + "," + format_double(e.cls) + "," +
               format_double(e.bb) + "\n";
    }
    write_file_atomic(dir / "loss_log.csv", csv);
}

TrackerModel load_checkpoint(const std::filesystem::path& dir) {
    nlohmann::json meta;
    ParamStore tensors = read_checkpoint(dir, meta);
    if (meta.value("format", "") != "evtrack-checkpoint-1") {
        throw std::runtime_error((dir / "checkpoint.json").string() + ": not an evtrack checkpoint");
    }
    TrackerModel model;
    const auto config = afnet::config_from_json(meta.at("architecture"));
    model.net = afnet::import_model(config, tensors);
    model.head_config.hidden = meta.value("head_hidden", 32);
    const TrackerModel fresh = init_tracker(config, model.head_config, 0);
    for (std::size_t i = 0; i < fresh.head.size(); ++i) {
        const auto& name = fresh.head.names()[i];
        const Tensor& t = tensors.get(name);
        if (!t.same_shape(fresh.head.values()[i])) {
            throw std::runtime_error("checkpoint tensor " + name + " has shape " + t.shape_string());
        }
        model.head.add(name, t);
    }
    return model;
}

}  // namespace evtrack::tracker
