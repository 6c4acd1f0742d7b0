#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evtrack/simulator.hpp"

namespace evtrack::sim {

namespace {

struct MotionProfile {
    double speed_min = 0.0;  // px/s
    double speed_max = 0.0;
    int segment_min = 8;     // event-frame intervals per straight segment
    int segment_max = 24;
};

// Piecewise-linear constant-speed path whose knots sit on the event-frame
// clock, so every event-frame interval lies inside a single segment.
std::vector<Waypoint> make_trajectory(std::mt19937_64& rng, const SceneConfig& scene, const MotionProfile& motion) {
    const double max_x = scene.width - scene.target.width;
    const double max_y = scene.height - scene.target.height;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Waypoint start{0, max_x * (0.25 + 0.5 * unit(rng)), max_y * (0.25 + 0.5 * unit(rng))};
    std::vector<Waypoint> path{start};
    if (motion.speed_max <= 0.0) {
        return path;
    }
    const double speed = motion.speed_min + (motion.speed_max - motion.speed_min) * unit(rng);
    std::uniform_int_distribution<int> segment(motion.segment_min, motion.segment_max);

    long step = 0;
    while (path.back().t < scene.duration) {
        const long next_step = step + segment(rng);
        const Micros t_next = next_step * 1'000'000L / scene.schedule.gamma_e();
        const Waypoint& from = path.back();
        const double length = speed * static_cast<double>(t_next - from.t) * 1e-6;

        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            const double angle = 2.0 * std::numbers::pi * unit(rng);
            const double x = from.x + length * std::cos(angle);
            const double y = from.y + length * std::sin(angle);
            if (x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
                path.push_back({t_next, x, y});
                placed = true;
            }
        }
        if (!placed) {
            // Head for the centre, shortening the segment so speed is kept.
            const double dx = 0.5 * max_x - from.x;
            const double dy = 0.5 * max_y - from.y;
            const double dist = std::hypot(dx, dy);
            const double room = std::min(length, dist);
            const auto steps = std::max<long>(1, static_cast<long>(std::floor(room / length * (next_step - step))));
            const Micros t_short = (step + steps) * 1'000'000L / scene.schedule.gamma_e();
            const double len = speed * static_cast<double>(t_short - from.t) * 1e-6;
            path.push_back({t_short, from.x + dx / dist * len, from.y + dy / dist * len});
            step += steps;
            continue;
        }
        step = next_step;
    }
    return path;
}

}  // namespace

SceneConfig make_scenario(ScenarioKind kind, std::uint64_t seed) {
    SceneConfig scene;
    scene.seed = seed;
    scene.kind = kind;
    std::mt19937_64 rng(seed * 0x2545F4914F6CDD1DULL + static_cast<std::uint64_t>(kind) + 1);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    scene.background.phase_x = phase(rng);
    scene.background.phase_y = phase(rng);
    scene.background.phase_diag = phase(rng);
    scene.background.period_x = 10.0 + 8.0 * unit(rng);
    scene.background.period_y = 10.0 + 8.0 * unit(rng);
    scene.background.period_diag = 14.0 + 8.0 * unit(rng);
    scene.target.phase_x = phase(rng);
    scene.target.phase_y = phase(rng);
    scene.exposure.noise_std = 2.0;

    MotionProfile motion{150.0, 250.0, 8, 24};
    switch (kind) {
        case ScenarioKind::Plain:
            break;
        case ScenarioKind::FM:
            // >= 4.4 px per 1/240 s interval
            motion = {1050.0, 1200.0, 4, 10};
            break;
        case ScenarioKind::NM:
            motion = {0.0, 0.0, 1, 1};
            break;
        case ScenarioKind::SBM: {
            const double angle = phase(rng);
            const double speed = 1.5 * motion.speed_max;
            scene.background.vx = speed * std::cos(angle);
            scene.background.vy = speed * std::sin(angle);
            break;
        }
        case ScenarioKind::HDR:
            scene.target.radiance = 700.0;
            scene.background.radiance = 50.0;
            break;
        case ScenarioKind::LL:
            scene.exposure.gain = 0.08;
            break;
    }
    scene.trajectory = make_trajectory(rng, scene, motion);
    validate_scene(scene);
    return scene;
}

Sequence simulate_sequence(const SceneConfig& scene) {
    validate_scene(scene);
    Sequence seq;
    seq.sensor_width = scene.width;
    seq.sensor_height = scene.height;
    seq.schedule = scene.schedule;
    seq.seed = scene.seed;
    seq.attribute = scene.kind;
    const Micros period = scene.schedule.frame_period();
    for (Micros t = 0; t <= scene.duration; t += period) {
        seq.frame_times.push_back(t);
        seq.frames.push_back(render_intensity(scene, t).quantized);
    }
    seq.events = emit_events(scene, 0, scene.duration);
    seq.init_box = ground_truth_box(scene, 0);
    for (Micros t : seq.event_timestamps()) {
        seq.ground_truth.push_back({t, ground_truth_box(scene, t)});
    }
    return seq;
}

}  // namespace evtrack::sim
