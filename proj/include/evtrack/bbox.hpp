#pragma once

#include <cstdint>
#include <vector>

namespace evtrack {

/// Axis-aligned box, top-left corner plus size, continuous pixel units.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 1.0;
    double h = 1.0;

    double center_x() const { return x + 0.5 * w; }
    double center_y() const { return y + 0.5 * h; }
    bool valid() const { return w > 0.0 && h > 0.0; }

    static BBox from_center(double cx, double cy, double w, double h) {
        return {cx - 0.5 * w, cy - 0.5 * h, w, h};
    }

    bool operator==(const BBox&) const = default;
};

struct TimedBox {
    std::int64_t t_us = 0;
    BBox box;

    bool operator==(const TimedBox&) const = default;
};

/// Challenge attribute of a sequence.
enum class ScenarioKind { HDR, LL, FM, NM, SBM, Plain };

const char* to_string(ScenarioKind kind);
/// parse_scenario_kind accepts the lower- or upper-case short names
/// (hdr, ll, fm, nm, sbm, plain); throws std::invalid_argument otherwise.
ScenarioKind parse_scenario_kind(const char* text);

inline constexpr ScenarioKind kAllScenarioKinds[] = {
    ScenarioKind::HDR, ScenarioKind::LL, ScenarioKind::FM,
    ScenarioKind::NM, ScenarioKind::SBM, ScenarioKind::Plain};

}  // namespace evtrack

#include <filesystem>

namespace evtrack {

/// Box CSV: header `t_us,x,y,w,h`; t integer µs, box fields decimal floats.
std::vector<TimedBox> load_boxes_csv(const std::filesystem::path& path);
void save_boxes_csv(const std::vector<TimedBox>& boxes, const std::filesystem::path& path);

}  // namespace evtrack
