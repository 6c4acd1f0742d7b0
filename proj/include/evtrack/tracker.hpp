#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evtrack/afnet.hpp"
#include "evtrack/eval.hpp"
#include "evtrack/sequence.hpp"

namespace evtrack::tracker {

inline constexpr int kFeatureStride = 4;
inline constexpr int kKernelSize = 4;  // k of the template kernel
inline constexpr int kCandidates = 16;

/// Pixel coordinate to feature-map coordinate (cell centres at 4u + 2).
inline double to_feature(double px) { return px / kFeatureStride - 0.5; }

struct HeadConfig {
    int hidden = 32;
    bool operator==(const HeadConfig&) const = default;
};

struct TrackerModel {
    afnet::AFNetModel net;
    HeadConfig head_config;
    ParamStore head;  // iou.fc1, iou.b1, iou.fc2, iou.b2
};

TrackerModel init_tracker(const afnet::AFNetConfig& config, const HeadConfig& head, std::uint64_t seed);

/// A box to pool from sample `batch` of a feature tensor.
struct Roi {
    int batch = 0;
    BBox box;  // pixels
};

/// Bilinear k x k resampling of each box (sample points at the centres of a
/// k x k grid over the box), zero outside the map. Output (M, C, k, k).
ag::Var roi_sample(const ag::Var& features, const std::vector<Roi>& rois, int k = kKernelSize);

/// Cosine similarity of each pooled window (M, C, k, k) with the kernel
/// (1, C, k, k); output (M). Zero windows score 0.
ag::Var cosine_scores(const ag::Var& windows, const ag::Var& kernel);

struct TemplateState {
    Tensor features;  // fused template features (1, C, H/4, W/4)
    BBox box;
    Tensor kernel;  // (1, C, k, k)
};

/// Throws std::invalid_argument when the box is not inside the image.
TemplateState init_template(const TrackerModel& model, const GrayImage& frame, const events::EventFrame& event_frame,
                            const BBox& box, afnet::FusionMode fusion);

struct ScoreMap {
    int height = 0;
    int width = 0;
    std::vector<double> scores;  // row-major
    int stride = kFeatureStride;
    double at(int v, int u) const { return scores[static_cast<std::size_t>(v) * width + u]; }
};

/// One window per feature cell, the template box size centred on the cell,
/// for every sample of `features`; output (N, 1, H', W').
ag::Var score_windows(const ag::Var& features, const ag::Var& kernel, double box_w, double box_h);

ScoreMap classify(const TemplateState& state, const Tensor& search_features);

/// 16 boxes: the prior followed by a fixed jitter table (centre within
/// +-0.25 of the size, size within about +-10%), generated from `seed`.
std::vector<BBox> jitter_candidates(const BBox& prior, std::uint64_t seed = 0);

/// Predicted IoU per candidate, (M) in (0, 1).
ag::Var predict_iou(const Binding& head, const ag::Var& features, const ag::Var& kernel, const std::vector<Roi>& rois);

using IouScorer = std::function<std::vector<double>(const std::vector<BBox>&)>;

/// Returns the first candidate with the highest score.
BBox refine_box(const std::vector<BBox>& candidates, const IouScorer& scorer);
BBox refine_box(const TrackerModel& model, const TemplateState& state, const Tensor& search_features,
                const BBox& prior);

struct LossConfig {
    double beta = 100.0;
    double hinge = 0.05;
    double label_sigma = 1.0;  // feature cells
};

/// Gaussian bump over the (H', W') cells centred on the box centre.
Tensor gaussian_label(int height, int width, const BBox& box, double sigma);

struct LossTerms {
    ag::Var total;
    ag::Var cls;
    ag::Var bb;
};

/// L = beta * L_cls + L_bb. Cells with label <= hinge are background and
/// contribute max(0, s - hinge)^2; other cells contribute (s - y)^2. L_bb is
/// the mean squared IoU error.
LossTerms compute_loss(const ag::Var& scores, const Tensor& label, const ag::Var& pred_iou,
                       const std::vector<double>& true_iou, const LossConfig& cfg);

/// Gradient check of the loss w.r.t. every extractor and head parameter on
/// a 16 x 16 toy pair.
std::vector<GradCheckCase> tracker_gradcheck_cases();

// Training ------------------------------------------------------------------

struct TrainConfig {
    std::uint64_t seed = 1;
    int epochs = 20;
    int batches_per_epoch = 50;
    int batch_size = 8;  // search samples sharing one template
    double step = 1e-2;
    double clip = 10.0;
    std::string optimizer = "gd";  // "gd" or "adam"
    LossConfig loss;
    std::vector<ScenarioKind> scenarios{ScenarioKind::Plain, ScenarioKind::FM};
    int sequences_per_scenario = 8;
    double drop_events = 0.2;  // probability of a neutral event frame
    double drop_frame = 0.2;   // probability of a neutral gray frame
    afnet::AFNetConfig net;
    HeadConfig head;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double cls = 0.0;
    double bb = 0.0;
};

struct TrainResult {
    TrackerModel model;
    std::vector<EpochLog> log;
};

/// Deterministic in cfg. Throws std::runtime_error on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const std::function<void(const EpochLog&)>& progress = {});
TrainResult train(const TrainConfig& cfg, const std::vector<Sequence>& dataset,
                  const std::function<void(const EpochLog&)>& progress = {});

/// Training sequences: cfg.sequences_per_scenario per scenario kind, seeds
/// derived from cfg.seed.
std::vector<Sequence> training_set(const TrainConfig& cfg);

struct ProbeStats {
    double peak_hit_rate = 0.0;  // argmax within one cell of the target centre
    double mean_peak_error = 0.0;  // cells
    double iou_mae = 0.0;          // IoU head vs true IoU on jittered boxes
    int samples = 0;
};

/// Diagnostics on `samples` random (sequence, timestamp) draws with full
/// inputs in mode (b).
ProbeStats evaluate_probes(const TrackerModel& model, const std::vector<Sequence>& sequences, int samples,
                           std::uint64_t seed);

/// Checkpoint directory: checkpoint.json, params.bin, loss_log.csv.
void save_checkpoint(const std::filesystem::path& dir, const TrainResult& result, const TrainConfig& cfg);
TrackerModel load_checkpoint(const std::filesystem::path& dir);

// Inference -----------------------------------------------------------------

enum class TrackFusion { AFNet, EarlyFusion, MiddleFusion, FrameOnly, EventOnly };

std::string to_string(TrackFusion f);
/// afnet | ef | mf | frame-only | event-only
TrackFusion parse_track_fusion(std::string_view text);

struct TrackOptions {
    TrackFusion fusion = TrackFusion::AFNet;
    events::AccumulationMode mode = events::AccumulationMode::SinceLastIntensityFrame;
    bool refine = true;
    double scale_lr = 0.05;  // weight of the refined size against the previous size
};

/// One box per event timestamp i + n / gamma_e.
eval::TrackResult track_sequence(const TrackerModel& model, const Sequence& sequence, const TrackOptions& options);

}  // namespace evtrack::tracker
