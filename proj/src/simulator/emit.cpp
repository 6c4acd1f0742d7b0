#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "evtrack/simulator.hpp"

namespace evtrack::sim {

namespace {

struct PixelEvent {
    double t;
    std::int32_t x;
    std::int32_t y;
    std::int8_t p;
};

}  // namespace

events::EventStream emit_events_from(const LogIntensityFn& source, const EmitterConfig& config, Micros t0,
                                     Micros t1) {
    if (t0 >= t1) {
        throw std::invalid_argument("emit window must satisfy t0 < t1");
    }
    if (!(config.step_us > 0.0) || !(config.contrast_threshold > 0.0)) {
        throw std::invalid_argument("emitter step and threshold must be positive");
    }
    const int width = config.width;
    const int height = config.height;
    const auto pixels = static_cast<std::size_t>(width) * height;
    const double threshold = config.contrast_threshold;

    std::vector<double> previous(pixels);
    std::vector<double> current(pixels);
    source(static_cast<double>(t0), previous);
    std::vector<double> reference = previous;

    std::vector<std::vector<PixelEvent>> row_events(static_cast<std::size_t>(height));
    std::vector<PixelEvent> all;

    const auto steps = static_cast<long>(std::ceil(static_cast<double>(t1 - t0) / config.step_us));
    for (long k = 1; k <= steps; ++k) {
        const double ta = static_cast<double>(t0) + static_cast<double>(k - 1) * config.step_us;
        const double tb = k == steps ? static_cast<double>(t1) : static_cast<double>(t0) + k * config.step_us;
        source(tb, current);

#pragma omp parallel for schedule(static)
        for (int y = 0; y < height; ++y) {
            auto& bucket = row_events[static_cast<std::size_t>(y)];
            bucket.clear();
            for (int x = 0; x < width; ++x) {
                const auto idx = static_cast<std::size_t>(y) * width + x;
                const double v0 = previous[idx];
                const double v1 = current[idx];
                double& ref = reference[idx];
                while (v1 - ref >= threshold) {
                    ref += threshold;
                    const double f = (ref - v0) / (v1 - v0);
                    bucket.push_back({ta + f * (tb - ta), x, y, 1});
                }
                while (ref - v1 >= threshold) {
                    ref -= threshold;
                    const double f = (ref - v0) / (v1 - v0);
                    bucket.push_back({ta + f * (tb - ta), x, y, -1});
                }
            }
        }
        for (const auto& bucket : row_events) {
            all.insert(all.end(), bucket.begin(), bucket.end());
        }
        std::swap(previous, current);
    }

    events::EventStream stream;
    stream.sensor_width = width;
    stream.sensor_height = height;
    stream.t_begin = t0;
    stream.t_end = t1;
    stream.events.reserve(all.size());
    for (const auto& e : all) {
        const auto t = std::clamp(static_cast<Micros>(std::floor(e.t)), t0, t1);
        stream.events.push_back({t, e.x, e.y, e.p});
    }
    // Per-pixel emission order survives the stable sort.
    std::stable_sort(stream.events.begin(), stream.events.end(), [](const events::Event& a, const events::Event& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return stream;
}

double simulation_step_us(const SceneConfig& scene) { return 1e6 / (10.0 * scene.schedule.gamma_e()); }

events::EventStream emit_events(const SceneConfig& scene, Micros t0, Micros t1) {
    if (t0 < 0 || t1 > scene.duration || t0 >= t1) {
        throw std::out_of_range("emit window [" + std::to_string(t0) + ", " + std::to_string(t1) +
                                "] outside [0, " + std::to_string(scene.duration) + "]");
    }
    EmitterConfig config{scene.width, scene.height, scene.contrast_threshold, simulation_step_us(scene)};
    auto source = [&scene](double t_us, std::span<double> out) {
        const auto linear = render_linear(scene, t_us);
        for (std::size_t k = 0; k < linear.size(); ++k) {
            out[k] = std::log(linear[k] + 1.0);
        }
    };
    return emit_events_from(source, config, t0, t1);
}

}  // namespace evtrack::sim
