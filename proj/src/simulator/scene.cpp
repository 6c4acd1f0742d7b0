#include <algorithm>
#include <stdexcept>
#include <string>

#include "evtrack/simulator.hpp"

namespace evtrack::sim {

void validate_scene(const SceneConfig& scene) {
    if (scene.width <= 0 || scene.height <= 0) {
        throw std::invalid_argument("sensor dimensions must be positive");
    }
    if (!(scene.contrast_threshold > 0.0)) {
        throw std::invalid_argument("contrast threshold must be positive");
    }
    if (scene.duration <= 0) {
        throw std::invalid_argument("duration must be positive");
    }
    if (scene.trajectory.empty()) {
        throw std::invalid_argument("trajectory needs at least one waypoint");
    }
    const double max_x = scene.width - scene.target.width;
    const double max_y = scene.height - scene.target.height;
    for (std::size_t k = 0; k < scene.trajectory.size(); ++k) {
        const auto& w = scene.trajectory[k];
        if (w.x < 0.0 || w.y < 0.0 || w.x > max_x || w.y > max_y) {
            throw std::invalid_argument("waypoint " + std::to_string(k) + " puts the target outside the sensor");
        }
        if (k > 0 && w.t <= scene.trajectory[k - 1].t) {
            throw std::invalid_argument("waypoint times must increase");
        }
    }
    if (scene.exposure.gain < 0.0 || scene.exposure.saturation <= 0.0 || scene.exposure.noise_std < 0.0) {
        throw std::invalid_argument("invalid exposure model");
    }
}

BBox ground_truth_box_at(const SceneConfig& scene, double t_us) {
    const auto& path = scene.trajectory;
    const double w = scene.target.width;
    const double h = scene.target.height;
    if (t_us <= static_cast<double>(path.front().t)) {
        return {path.front().x, path.front().y, w, h};
    }
    if (t_us >= static_cast<double>(path.back().t)) {
        return {path.back().x, path.back().y, w, h};
    }
    auto next = std::upper_bound(path.begin(), path.end(), t_us,
                                 [](double t, const Waypoint& p) { return t < static_cast<double>(p.t); });
    const auto& b = *next;
    const auto& a = *(next - 1);
    const double f = (t_us - static_cast<double>(a.t)) / static_cast<double>(b.t - a.t);
    return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), w, h};
}

BBox ground_truth_box(const SceneConfig& scene, Micros t) {
    if (t < 0 || t > scene.duration) {
        throw std::out_of_range("time " + std::to_string(t) + " outside [0, " + std::to_string(scene.duration) + "]");
    }
    return ground_truth_box_at(scene, static_cast<double>(t));
}

}  // namespace evtrack::sim
