#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "evtrack/bbox.hpp"
#include "evtrack/events.hpp"

namespace evtrack {

/// 8-bit grayscale image, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    static GrayImage filled(int width, int height, std::uint8_t value) {
        return {width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value)};
    }
    bool operator==(const GrayImage&) const = default;
};

/// Binary PGM ("P5", maxval 255).
GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& image, const std::filesystem::path& path);
std::string encode_pgm(const GrayImage& image);

/// A recorded (or simulated) sequence: low-rate frames, the event stream
/// covering them, and ground-truth boxes at every event timestamp.
struct Sequence {
    int sensor_width = 0;
    int sensor_height = 0;
    events::RateSchedule schedule{1, 1};
    std::vector<events::Micros> frame_times;
    std::vector<GrayImage> frames;
    events::EventStream events;
    BBox init_box;                       // target box at frame_times.front()
    std::vector<TimedBox> ground_truth;  // one row per event timestamp
    std::optional<ScenarioKind> attribute;
    std::uint64_t seed = 0;

    /// event_timestamps lists frame_time + n/gamma_e for every inter-frame
    /// interval and n = 1..ratio, in increasing order.
    std::vector<events::Micros> event_timestamps() const;
};

/// save_sequence writes manifest.json, frames/NNNN.pgm, events.csv and
/// groundtruth.csv under dir.
void save_sequence(const Sequence& sequence, const std::filesystem::path& dir);
Sequence load_sequence(const std::filesystem::path& dir);

}  // namespace evtrack
