#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evtrack/bbox.hpp"

namespace evtrack::eval {

inline constexpr int kSuccessSamples = 21;    // tau = 0, 0.05, ..., 1
inline constexpr int kPrecisionSamples = 51;  // d = 0, 1, ..., 50 px
inline constexpr int kDefaultRprThreshold = 20;

/// Reference scores on the real FE240hz benchmark. Printed next to the
/// synthetic results for ordering only; absolute values are not comparable.
struct ReferenceScores {
    double fused_rsr = 0.584;
    double fused_rpr = 0.870;
    double event_only_rsr = 0.436;
    double frame_only_rsr = 0.162;
};
inline constexpr ReferenceScores kReferenceScores{};

struct TrackResult {
    std::vector<TimedBox> boxes;  // strictly increasing t
    std::optional<ScenarioKind> attribute;
};

double iou(const BBox& a, const BBox& b);
double center_error(const BBox& a, const BBox& b);

struct Curves {
    std::vector<double> success;    // kSuccessSamples values
    std::vector<double> precision;  // kPrecisionSamples values
    std::size_t frames = 0;
};

double success_threshold(int k);

/// Success counts IoU > tau (strict), precision counts error <= d. Throws
/// std::invalid_argument naming the first timestamp mismatch.
Curves success_precision_curves(const TrackResult& result, const TrackResult& gt);

struct Summary {
    double rsr = 0.0;
    double rpr = 0.0;
    double op50 = 0.0;
    double op75 = 0.0;
    Curves curves;
};

/// RSR is the mean of the success samples, RPR the precision at
/// threshold_px (an integer in [0, 50]), OP_t the success at t.
Summary summarize(const Curves& curves, int threshold_px = kDefaultRprThreshold);

struct MetricsReport {
    Summary overall;
    std::map<ScenarioKind, Summary> attributes;
    int rpr_threshold = kDefaultRprThreshold;
    std::size_t sequences = 0;
};

/// Pools frames per attribute and overall; attributes without results are
/// omitted. Untagged results only enter the overall summary.
MetricsReport attribute_breakdown(const std::vector<std::pair<TrackResult, TrackResult>>& runs,
                                  int threshold_px = kDefaultRprThreshold);

/// Linear interpolation of every box field between the bracketing source
/// timestamps; holds the nearest box outside the source span.
TrackResult interpolate_boxes_linear(const TrackResult& low_rate, const std::vector<std::int64_t>& target_times);

/// Keeps, for each multiple k * 1e6 / rate (from 0 up to the last
/// timestamp), the box nearest in time (the earlier one on ties). Rates that
/// do not divide one second into whole microseconds are rejected.
TrackResult subsample_at_rate(const TrackResult& dense, int rate_hz);

nlohmann::json summary_to_json(const Summary& s);
Summary summary_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const MetricsReport& report, const std::string& label);

/// Writes metrics.json, success.csv and precision.csv (`threshold,value`).
void write_report(const std::filesystem::path& dir, const MetricsReport& report, const std::string& label);

}  // namespace evtrack::eval
