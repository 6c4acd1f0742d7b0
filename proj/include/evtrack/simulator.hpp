#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "evtrack/bbox.hpp"
#include "evtrack/events.hpp"
#include "evtrack/sequence.hpp"

namespace evtrack::sim {

using events::Micros;

/// Trajectory knot: target top-left corner (pixels) at time t.
struct Waypoint {
    Micros t = 0;
    double x = 0.0;
    double y = 0.0;
};

/// Square target filled with a sinusoidal checker texture.
struct TargetConfig {
    double width = 12.0;
    double height = 12.0;
    double radiance = 180.0;
    double texture_contrast = 0.35;
    double texture_period = 6.0;  // pixels
    double phase_x = 0.0;
    double phase_y = 0.0;
};

/// Smooth sinusoidal background, optionally translating at (vx, vy) px/s.
struct BackgroundConfig {
    double radiance = 70.0;
    double texture_contrast = 0.3;
    double period_x = 13.0;
    double period_y = 11.0;
    double period_diag = 17.0;
    double phase_x = 0.0;
    double phase_y = 0.0;
    double phase_diag = 0.0;
    double vx = 0.0;
    double vy = 0.0;
};

/// Linear intensity = gain * radiance. The 8-bit view maps [0, saturation]
/// to [0, 255] after adding Gaussian read noise (frames only).
struct ExposureConfig {
    double gain = 1.0;
    double saturation = 255.0;
    double noise_std = 0.0;
};

struct SceneConfig {
    int width = 64;
    int height = 64;
    double contrast_threshold = 0.15;  // log-intensity units
    TargetConfig target;
    std::vector<Waypoint> trajectory;
    BackgroundConfig background;
    ExposureConfig exposure;
    events::RateSchedule schedule{20, 240};
    Micros duration = 500'000;
    std::uint64_t seed = 0;
    ScenarioKind kind = ScenarioKind::Plain;
};

/// validate_scene throws std::invalid_argument on a broken config.
void validate_scene(const SceneConfig& scene);

struct IntensityImage {
    int width = 0;
    int height = 0;
    std::vector<double> linear;  // >= 0
    GrayImage quantized;
};

/// Noise-free linear intensity at a fractional time (µs); the building block
/// of both frames and events.
std::vector<double> render_linear(const SceneConfig& scene, double t_us);

/// render_intensity renders the conventional frame at integer time t.
IntensityImage render_intensity(const SceneConfig& scene, Micros t);

BBox ground_truth_box(const SceneConfig& scene, Micros t);
BBox ground_truth_box_at(const SceneConfig& scene, double t_us);

/// Per-pixel log-intensity source for the event generator: fills `out`
/// (width*height values of log(L + 1)) for time t_us.
using LogIntensityFn = std::function<void(double t_us, std::span<double> out)>;

struct EmitterConfig {
    int width = 0;
    int height = 0;
    double contrast_threshold = 0.15;
    double step_us = 0.0;  // simulation step
};

/// emit_events_from runs the contrast-threshold trigger model over [t0, t1]:
/// each pixel keeps a reference log intensity, the signal is linear between
/// steps, and every crossing of reference +/- C emits one event stamped at
/// the (floored) crossing time and moves the reference by +/- C.
events::EventStream emit_events_from(const LogIntensityFn& source, const EmitterConfig& config, Micros t0,
                                     Micros t1);

/// emit_events simulates the scene's event camera with 10 steps per
/// event-frame interval.
events::EventStream emit_events(const SceneConfig& scene, Micros t0, Micros t1);

/// Simulation step used by emit_events (µs, fractional).
double simulation_step_us(const SceneConfig& scene);

/// Canonical scenario for each challenge attribute; deterministic in seed.
SceneConfig make_scenario(ScenarioKind kind, std::uint64_t seed);

/// simulate_sequence renders all frames, the full event stream and the
/// ground truth at every event timestamp.
Sequence simulate_sequence(const SceneConfig& scene);

}  // namespace evtrack::sim
