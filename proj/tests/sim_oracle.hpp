#pragma once

#include <cmath>
#include <vector>

#include "evtrack/simulator.hpp"

namespace evtrack::test {

struct OracleEvent {
    double t;
    int p;
};

/// Dense brute-force integrator. The log(L + 1) signal of every pixel is
/// linear between simulator steps; the oracle walks it on a grid ten times
/// finer and fires one event per whole threshold between the pixel
/// reference and each sample, stamped at the end of the fine step.
inline std::vector<std::vector<OracleEvent>> fine_grid_oracle(const sim::SceneConfig& scene, events::Micros t0,
                                                              events::Micros t1) {
    const double step = sim::simulation_step_us(scene);
    const double c = scene.contrast_threshold;
    const auto pixels = static_cast<std::size_t>(scene.width) * scene.height;
    auto log_frame = [&](double t) {
        auto v = sim::render_linear(scene, t);
        for (auto& x : v) x = std::log(x + 1.0);
        return v;
    };
    std::vector<double> ref = log_frame(static_cast<double>(t0));
    std::vector<double> a = ref;
    std::vector<double> v(pixels);
    std::vector<std::vector<OracleEvent>> out(pixels);
    const auto steps = static_cast<long>(std::ceil(static_cast<double>(t1 - t0) / step));
    for (long k = 1; k <= steps; ++k) {
        const double ta = static_cast<double>(t0) + (k - 1) * step;
        const double tb = k == steps ? static_cast<double>(t1) : static_cast<double>(t0) + k * step;
        const auto b = log_frame(tb);
        for (int j = 1; j <= 10; ++j) {
            const double f = j / 10.0;
            const double t = ta + f * (tb - ta);
            for (std::size_t i = 0; i < pixels; ++i) v[i] = j == 10 ? b[i] : a[i] + f * (b[i] - a[i]);
            for (std::size_t i = 0; i < pixels; ++i) {
                while (v[i] - ref[i] >= c) {
                    ref[i] += c;
                    out[i].push_back({t, 1});
                }
                while (ref[i] - v[i] >= c) {
                    ref[i] -= c;
                    out[i].push_back({t, -1});
                }
            }
        }
        a = b;
    }
    return out;
}

}  // namespace evtrack::test
