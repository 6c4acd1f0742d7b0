#include <doctest.h>

#include <cmath>
#include <map>

#include "evtrack/simulator.hpp"
#include "sim_oracle.hpp"

using namespace evtrack;
using namespace evtrack::sim;

namespace {

std::vector<int> pixel_counts(const events::EventStream& s) {
    std::vector<int> counts(static_cast<std::size_t>(s.sensor_width) * s.sensor_height, 0);
    for (const auto& e : s.events) ++counts[static_cast<std::size_t>(e.y) * s.sensor_width + e.x];
    return counts;
}

// Checks the stream against the oracle; returns the number of mismatched pixels.
int oracle_mismatches(const SceneConfig& scene, events::Micros t0, events::Micros t1) {
    const auto stream = emit_events(scene, t0, t1);
    const auto oracle = test::fine_grid_oracle(scene, t0, t1);
    std::vector<std::vector<events::Event>> per(oracle.size());
    for (const auto& e : stream.events) per[static_cast<std::size_t>(e.y) * scene.width + e.x].push_back(e);
    const double fine = simulation_step_us(scene) / 10.0;
    int bad = 0;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        bool ok = oracle[i].size() == per[i].size();
        for (std::size_t j = 0; ok && j < oracle[i].size(); ++j) {
            const double dt = oracle[i][j].t - static_cast<double>(per[i][j].t);
            ok = oracle[i][j].p == per[i][j].p && dt >= 0.0 && dt < fine + 1.0;
        }
        bad += !ok;
    }
    return bad;
}

SceneConfig static_scene() {
    SceneConfig s;
    s.trajectory = {{0, 20.0, 20.0}};
    return s;
}

}  // namespace

TEST_CASE("constant scene emits nothing") {
    const auto scene = static_scene();
    CHECK(emit_events(scene, 0, scene.duration).events.empty());
    CHECK(render_intensity(scene, 0).quantized == render_intensity(scene, scene.duration).quantized);
}

TEST_CASE("a ramp of 3.2 thresholds gives three positive events") {
    const double c = 0.15;
    EmitterConfig cfg{2, 1, c, 10.0};
    auto source = [&](double t, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 1.0 + 3.2 * c * t / 1000.0;
    };
    const auto s = emit_events_from(source, cfg, 0, 1000);
    REQUIRE(s.events.size() == 3);
    for (const auto& e : s.events) {
        CHECK(e.x == 1);
        CHECK(e.p == 1);
    }
    // Crossings at k/3.2 of the window, floored.
    for (int k = 0; k < 3; ++k) {
        const double exact = (k + 1) * 1000.0 / 3.2;
        CHECK(static_cast<double>(s.events[k].t) <= exact);
        CHECK(static_cast<double>(s.events[k].t) > exact - 1.0 - 1e-9);
    }
}

TEST_CASE("a falling ramp gives negative events") {
    EmitterConfig cfg{1, 1, 0.1, 7.0};
    auto source = [](double t, std::span<double> out) { out[0] = 2.0 - 0.55 * t / 500.0; };
    const auto s = emit_events_from(source, cfg, 0, 500);
    REQUIRE(s.events.size() == 5);
    for (const auto& e : s.events) CHECK(e.p == -1);
}

TEST_CASE("emitter rejects bad arguments") {
    EmitterConfig cfg{1, 1, 0.1, 0.0};
    auto source = [](double, std::span<double> out) { out[0] = 0.0; };
    CHECK_THROWS_AS(emit_events_from(source, cfg, 0, 10), std::invalid_argument);
    cfg.step_us = 1.0;
    CHECK_THROWS_AS(emit_events_from(source, cfg, 10, 10), std::invalid_argument);
    const auto scene = static_scene();
    CHECK_THROWS_AS(emit_events(scene, 0, scene.duration + 1), std::out_of_range);
    CHECK_THROWS_AS(render_intensity(scene, -1), std::out_of_range);
}

TEST_CASE("moving square matches the fine-grid oracle") {
    SceneConfig scene;
    scene.background.texture_contrast = 0.0;
    scene.background.radiance = 20.0;
    scene.target.texture_contrast = 0.0;
    scene.target.radiance = 220.0;
    scene.trajectory = {{0, 10.0, 12.0}, {250'000, 40.0, 30.0}, {500'000, 30.0, 45.0}};
    validate_scene(scene);
    CHECK(oracle_mismatches(scene, 0, 100'000) == 0);
}

TEST_CASE("scenarios match the fine-grid oracle") {
    for (auto kind : kAllScenarioKinds) {
        CAPTURE(to_string(kind));
        CHECK(oracle_mismatches(make_scenario(kind, 7), 100'000, 160'000) == 0);
    }
}

TEST_CASE("doubling the threshold never adds events") {
    for (auto kind : {ScenarioKind::Plain, ScenarioKind::SBM}) {
        auto scene = make_scenario(kind, 3);
        const auto base = pixel_counts(emit_events(scene, 0, 100'000));
        scene.contrast_threshold *= 2.0;
        const auto doubled = pixel_counts(emit_events(scene, 0, 100'000));
        for (std::size_t i = 0; i < base.size(); ++i) CHECK(doubled[i] <= base[i]);
    }
}

TEST_CASE("stream is time sorted with (y, x) tie-break") {
    const auto s = emit_events(make_scenario(ScenarioKind::FM, 2), 0, 50'000);
    REQUIRE(!s.events.empty());
    events::validate_stream(s);
    for (std::size_t k = 1; k < s.events.size(); ++k) {
        const auto& a = s.events[k - 1];
        const auto& b = s.events[k];
        CHECK((a.t < b.t || (a.t == b.t && (a.y < b.y || (a.y == b.y && a.x <= b.x)))));
    }
}

TEST_CASE("ground truth follows the trajectory") {
    SceneConfig scene;
    scene.trajectory = {{0, 4.0, 8.0}, {400'000, 44.0, 28.0}};
    const auto b0 = ground_truth_box(scene, 0);
    CHECK(b0 == BBox{4.0, 8.0, 12.0, 12.0});
    const auto mid = ground_truth_box(scene, 200'000);
    CHECK(mid.x == doctest::Approx(24.0));
    CHECK(mid.y == doctest::Approx(18.0));
    CHECK(ground_truth_box(scene, 500'000) == BBox{44.0, 28.0, 12.0, 12.0});
}

TEST_CASE("scene validation") {
    SceneConfig scene;
    CHECK_THROWS_AS(validate_scene(scene), std::invalid_argument);
    scene.trajectory = {{0, 60.0, 0.0}};
    CHECK_THROWS_AS(validate_scene(scene), std::invalid_argument);
    scene.trajectory = {{0, 0.0, 0.0}, {0, 1.0, 1.0}};
    CHECK_THROWS_AS(validate_scene(scene), std::invalid_argument);
    scene.trajectory = {{0, 0.0, 0.0}};
    scene.contrast_threshold = 0.0;
    CHECK_THROWS_AS(validate_scene(scene), std::invalid_argument);
}

TEST_CASE("make_scenario is deterministic") {
    for (auto kind : kAllScenarioKinds) {
        const auto a = make_scenario(kind, 11);
        const auto b = make_scenario(kind, 11);
        REQUIRE(a.trajectory.size() == b.trajectory.size());
        for (std::size_t k = 0; k < a.trajectory.size(); ++k) {
            CHECK(a.trajectory[k].t == b.trajectory[k].t);
            CHECK(a.trajectory[k].x == b.trajectory[k].x);
            CHECK(a.trajectory[k].y == b.trajectory[k].y);
        }
        CHECK(a.background.phase_x == b.background.phase_x);
        CHECK(render_intensity(a, 41'666).quantized == render_intensity(b, 41'666).quantized);
    }
}

TEST_CASE("simulated sequence layout") {
    const auto seq = simulate_sequence(make_scenario(ScenarioKind::Plain, 5));
    CHECK(seq.frames.size() == 11);
    CHECK(seq.frame_times.back() == 500'000);
    CHECK(seq.ground_truth.size() == 120);
    CHECK(seq.ground_truth.front().t_us == 4166);
    CHECK(seq.ground_truth.back().t_us == 500'000);
    CHECK(seq.attribute == ScenarioKind::Plain);
    const auto again = simulate_sequence(make_scenario(ScenarioKind::Plain, 5));
    CHECK(again.events == seq.events);
    CHECK(again.frames == seq.frames);
    CHECK(again.ground_truth == seq.ground_truth);
}

TEST_CASE("HDR saturates the target region") {
    for (int seed = 1; seed <= 3; ++seed) {
        const auto scene = make_scenario(ScenarioKind::HDR, seed);
        const auto img = render_intensity(scene, 0);
        const auto box = ground_truth_box(scene, 0);
        int inside = 0, saturated = 0;
        for (int y = static_cast<int>(std::ceil(box.y)); y + 1 <= box.y + box.h; ++y) {
            for (int x = static_cast<int>(std::ceil(box.x)); x + 1 <= box.x + box.w; ++x) {
                const auto k = static_cast<std::size_t>(y) * scene.width + x;
                ++inside;
                saturated += img.quantized.pixels[k] == 255;
                if (img.linear[k] >= scene.exposure.saturation) CHECK(img.quantized.pixels[k] == 255);
            }
        }
        REQUIRE(inside > 0);
        CHECK(saturated >= 0.2 * inside);
    }
}

TEST_CASE("LL frames are dark") {
    for (int seed = 1; seed <= 3; ++seed) {
        const auto img = render_intensity(make_scenario(ScenarioKind::LL, seed), 100'000);
        double mean = 0.0;
        for (auto p : img.quantized.pixels) mean += p;
        CHECK(mean / img.quantized.pixels.size() < 25.0);
    }
}

TEST_CASE("FM moves at least 4 px per event frame") {
    for (int seed = 1; seed <= 3; ++seed) {
        const auto scene = make_scenario(ScenarioKind::FM, seed);
        const auto period = scene.schedule.event_offset(1);
        for (events::Micros t = 0; t + period <= scene.duration; t += period) {
            const auto a = ground_truth_box(scene, t);
            const auto b = ground_truth_box(scene, t + period);
            CHECK(std::hypot(b.center_x() - a.center_x(), b.center_y() - a.center_y()) >= 4.0);
        }
    }
}

TEST_CASE("NM target is static and silent") {
    const auto scene = make_scenario(ScenarioKind::NM, 4);
    CHECK(emit_events(scene, 0, scene.duration).events.empty());
    CHECK(ground_truth_box(scene, 0) == ground_truth_box(scene, scene.duration));
    const auto a = render_intensity(scene, 0);
    const auto b = render_intensity(scene, scene.duration);
    CHECK(a.linear == b.linear);
}

TEST_CASE("SBM background outpaces the target") {
    for (int seed = 1; seed <= 3; ++seed) {
        const auto scene = make_scenario(ScenarioKind::SBM, seed);
        const double bg = std::hypot(scene.background.vx, scene.background.vy);
        for (std::size_t k = 1; k < scene.trajectory.size(); ++k) {
            const auto& a = scene.trajectory[k - 1];
            const auto& b = scene.trajectory[k];
            const double speed = std::hypot(b.x - a.x, b.y - a.y) / (static_cast<double>(b.t - a.t) * 1e-6);
            CHECK(bg >= speed);
        }
    }
}
