#include "evtrack/events.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace evtrack::events {

namespace {

constexpr Micros kMicrosPerSecond = 1'000'000;

}  // namespace

AccumulationMode parse_accumulation_mode(const char* text) {
    const std::string value(text);
    if (value == "a") {
        return AccumulationMode::SinceLastEventFrame;
    }
    if (value == "b") {
        return AccumulationMode::SinceLastIntensityFrame;
    }
    throw std::invalid_argument("unknown accumulation mode '" + value + "' (expected a|b)");
}

const char* to_string(AccumulationMode mode) {
    return mode == AccumulationMode::SinceLastEventFrame ? "a" : "b";
}

EventFrame EventFrame::neutral(int width, int height, Micros t_start, Micros t_end) {
    EventFrame frame;
    frame.width = width;
    frame.height = height;
    frame.pixels.assign(static_cast<std::size_t>(width) * height, kNeutralPixel);
    frame.t_start = t_start;
    frame.t_end = t_end;
    return frame;
}

RateSchedule::RateSchedule(int gamma_f, int gamma_e) : gamma_f_(gamma_f), gamma_e_(gamma_e) {
    if (gamma_f <= 0 || gamma_e <= 0) {
        throw std::invalid_argument("frame rates must be positive");
    }
    if (gamma_e % gamma_f != 0) {
        throw std::invalid_argument("gamma_e (" + std::to_string(gamma_e) + ") is not a multiple of gamma_f (" +
                                    std::to_string(gamma_f) + ")");
    }
}

Micros RateSchedule::event_offset(int n) const {
    return static_cast<Micros>(n) * kMicrosPerSecond / gamma_e_;
}

Micros RateSchedule::frame_period() const { return kMicrosPerSecond / gamma_f_; }

void validate_stream(const EventStream& stream) {
    if (stream.sensor_width <= 0 || stream.sensor_height <= 0) {
        throw std::invalid_argument("sensor dimensions must be positive");
    }
    if (stream.t_begin > stream.t_end) {
        throw std::invalid_argument("stream span is inverted");
    }
    for (std::size_t k = 0; k < stream.events.size(); ++k) {
        const Event& e = stream.events[k];
        if (e.x < 0 || e.x >= stream.sensor_width || e.y < 0 || e.y >= stream.sensor_height) {
            throw std::invalid_argument("event " + std::to_string(k) + " lies outside the sensor");
        }
        if (e.p != 1 && e.p != -1) {
            throw std::invalid_argument("event " + std::to_string(k) + " has polarity " + std::to_string(e.p));
        }
        if (e.t < stream.t_begin || e.t > stream.t_end) {
            throw std::invalid_argument("event " + std::to_string(k) + " lies outside the stream span");
        }
        if (k > 0 && e.t < stream.events[k - 1].t) {
            throw std::invalid_argument("event " + std::to_string(k) + " is out of time order");
        }
    }
}

EventFrame aggregate_events(const EventStream& stream, Micros t_start, Micros t_end, AccumulationMode mode) {
    if (t_start >= t_end) {
        throw std::invalid_argument("empty or inverted window [" + std::to_string(t_start) + ", " +
                                    std::to_string(t_end) + ")");
    }
    if (t_start < stream.t_begin || t_end > stream.t_end) {
        throw std::out_of_range("window [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                                ") outside stream span [" + std::to_string(stream.t_begin) + ", " +
                                std::to_string(stream.t_end) + "]");
    }
    EventFrame frame = EventFrame::neutral(stream.sensor_width, stream.sensor_height, t_start, t_end);
    frame.mode = mode;

    auto by_time = [](const Event& e, Micros t) { return e.t < t; };
    auto first = std::lower_bound(stream.events.begin(), stream.events.end(), t_start, by_time);
    auto last = std::lower_bound(first, stream.events.end(), t_end, by_time);
    // Stream order is time order, so a forward pass leaves the latest event.
    for (auto it = first; it != last; ++it) {
        frame.pixels[static_cast<std::size_t>(it->y) * frame.width + it->x] =
            it->p > 0 ? kPositivePixel : kNegativePixel;
    }
    return frame;
}

FramePairing pair_frame(const RateSchedule& schedule, Micros t, std::span<const Micros> frame_times) {
    if (frame_times.empty() || t <= frame_times.front()) {
        throw std::invalid_argument("timestamp " + std::to_string(t) + " is not after the first frame");
    }
    auto after = std::lower_bound(frame_times.begin(), frame_times.end(), t);
    const auto index = static_cast<std::size_t>(std::distance(frame_times.begin(), after) - 1);
    const Micros delta = t - frame_times[index];

    // Nearest grid step, then require the floored grid time to match exactly.
    const Micros n = (delta * schedule.gamma_e() + kMicrosPerSecond / 2) / kMicrosPerSecond;
    if (n < 1 || n > schedule.ratio() || schedule.event_offset(static_cast<int>(n)) != delta) {
        throw std::invalid_argument("timestamp " + std::to_string(t) + " is not on the event-frame grid of frame " +
                                    std::to_string(index) + " (expected frame_time + n/" +
                                    std::to_string(schedule.gamma_e()) + " s, 1 <= n <= " +
                                    std::to_string(schedule.ratio()) + ")");
    }
    return {index, static_cast<int>(n)};
}

std::pair<Micros, Micros> accumulation_window(const RateSchedule& schedule, Micros frame_time, int n,
                                              AccumulationMode mode) {
    if (n < 1 || n > schedule.ratio()) {
        throw std::out_of_range("event step n=" + std::to_string(n) + " outside [1, " +
                                std::to_string(schedule.ratio()) + "]");
    }
    const Micros end = frame_time + schedule.event_offset(n);
    const Micros start =
        mode == AccumulationMode::SinceLastIntensityFrame ? frame_time : frame_time + schedule.event_offset(n - 1);
    return {start, end};
}

}  // namespace evtrack::events
