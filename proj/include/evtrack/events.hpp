#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace evtrack::events {

using Micros = std::int64_t;

/// One sensor record: pixel (x, y) changed log intensity by one contrast
/// threshold at time t, in the direction given by p.
struct Event {
    Micros t = 0;
    std::int32_t x = 0;
    std::int32_t y = 0;
    std::int8_t p = 1;

    bool operator==(const Event&) const = default;
};

/// Time-sorted events from one sensor over [t_begin, t_end].
struct EventStream {
    std::vector<Event> events;
    int sensor_width = 0;
    int sensor_height = 0;
    Micros t_begin = 0;
    Micros t_end = 0;

    bool operator==(const EventStream&) const = default;
};

/// Which instant an event window starts from.
enum class AccumulationMode {
    SinceLastEventFrame,      // (a)
    SinceLastIntensityFrame,  // (b)
};

AccumulationMode parse_accumulation_mode(const char* text);  // "a" | "b"
const char* to_string(AccumulationMode mode);

inline constexpr std::uint8_t kPositivePixel = 255;
inline constexpr std::uint8_t kNegativePixel = 0;
inline constexpr std::uint8_t kNeutralPixel = 127;

/// Event window rendered to an 8-bit image; every pixel is 0, 127 or 255.
struct EventFrame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
    Micros t_start = 0;
    Micros t_end = 0;
    AccumulationMode mode = AccumulationMode::SinceLastIntensityFrame;

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    /// neutral returns the frame an empty window produces.
    static EventFrame neutral(int width, int height, Micros t_start, Micros t_end);
};

/// Pairing of the conventional frame clock (gamma_f Hz) with the event-frame
/// clock (gamma_e Hz). gamma_e must be an integer multiple of gamma_f.
class RateSchedule {
public:
    RateSchedule(int gamma_f, int gamma_e);

    int gamma_f() const { return gamma_f_; }
    int gamma_e() const { return gamma_e_; }
    int ratio() const { return gamma_e_ / gamma_f_; }

    /// Offset of the n-th event timestamp after a frame, floored to whole µs.
    Micros event_offset(int n) const;
    /// Conventional frame period, floored to whole µs.
    Micros frame_period() const;

    bool operator==(const RateSchedule&) const = default;

private:
    int gamma_f_;
    int gamma_e_;
};

/// validate_stream checks ordering, bounds, polarity and span; throws
/// std::invalid_argument describing the first violation.
void validate_stream(const EventStream& stream);

/// aggregate_events renders events with t in [t_start, t_end). The most
/// recent event at a pixel decides its value (255 for p=+1, 0 for p=-1);
/// pixels without events stay 127. Ties in t resolve to stream order.
EventFrame aggregate_events(const EventStream& stream, Micros t_start, Micros t_end,
                            AccumulationMode mode = AccumulationMode::SinceLastIntensityFrame);

struct FramePairing {
    std::size_t frame_index = 0;
    int n = 0;

    bool operator==(const FramePairing&) const = default;
};

/// pair_frame finds the latest frame strictly before t and the event step n
/// with t = frame_time + n / gamma_e (floored to µs), 1 <= n <= ratio.
FramePairing pair_frame(const RateSchedule& schedule, Micros t, std::span<const Micros> frame_times);

/// accumulation_window returns the half-open [start, end) event window for
/// the n-th event timestamp after the frame captured at frame_time.
std::pair<Micros, Micros> accumulation_window(const RateSchedule& schedule, Micros frame_time, int n,
                                              AccumulationMode mode);

/// Event CSV: header `t_us,x,y,p`, one decimal-integer row per event.
/// Sensor geometry and span are not part of the file; the caller supplies
/// them (usually from the sequence manifest).
EventStream load_event_stream(const std::filesystem::path& path, int sensor_width, int sensor_height,
                              Micros t_begin, Micros t_end);
void save_event_stream(const EventStream& stream, const std::filesystem::path& path);

}  // namespace evtrack::events
