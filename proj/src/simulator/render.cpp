#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "evtrack/simulator.hpp"

namespace evtrack::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double overlap(double lo, double hi, double a, double b) {
    return std::clamp(std::min(hi, b) - std::max(lo, a), 0.0, 1.0);
}

double background_radiance(const BackgroundConfig& bg, double u, double v) {
    const double pattern = 0.5 * std::sin(kTwoPi * u / bg.period_x + bg.phase_x) *
                               std::sin(kTwoPi * v / bg.period_y + bg.phase_y) +
                           0.5 * std::sin(kTwoPi * (u + v) / bg.period_diag + bg.phase_diag);
    return bg.radiance * (1.0 + bg.texture_contrast * pattern);
}

double target_radiance(const TargetConfig& target, double u, double v) {
    const double pattern = std::sin(kTwoPi * u / target.texture_period + target.phase_x) *
                           std::sin(kTwoPi * v / target.texture_period + target.phase_y);
    return target.radiance * (1.0 + target.texture_contrast * pattern);
}

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::vector<double> render_linear(const SceneConfig& scene, double t_us) {
    const BBox box = ground_truth_box_at(scene, t_us);
    const double seconds = t_us * 1e-6;
    const double shift_x = scene.background.vx * seconds;
    const double shift_y = scene.background.vy * seconds;
    const double gain = scene.exposure.gain;

    std::vector<double> out(static_cast<std::size_t>(scene.width) * scene.height);
    for (int y = 0; y < scene.height; ++y) {
        const double cov_y = overlap(y, y + 1.0, box.y, box.y + box.h);
        for (int x = 0; x < scene.width; ++x) {
            const double cx = x + 0.5;
            const double cy = y + 0.5;
            double radiance = background_radiance(scene.background, cx - shift_x, cy - shift_y);
            const double coverage = cov_y * overlap(x, x + 1.0, box.x, box.x + box.w);
            if (coverage > 0.0) {
                radiance = (1.0 - coverage) * radiance + coverage * target_radiance(scene.target, cx - box.x, cy - box.y);
            }
            out[static_cast<std::size_t>(y) * scene.width + x] = gain * radiance;
        }
    }
    return out;
}

IntensityImage render_intensity(const SceneConfig& scene, Micros t) {
    if (t < 0 || t > scene.duration) {
        throw std::out_of_range("time " + std::to_string(t) + " outside [0, " + std::to_string(scene.duration) + "]");
    }
    IntensityImage image;
    image.width = scene.width;
    image.height = scene.height;
    image.linear = render_linear(scene, static_cast<double>(t));
    image.quantized = GrayImage::filled(scene.width, scene.height, 0);

    const auto& exposure = scene.exposure;
    std::mt19937_64 rng(mix(scene.seed ^ mix(static_cast<std::uint64_t>(t))));
    std::normal_distribution<double> noise(0.0, 1.0);
    const double scale = 255.0 / exposure.saturation;
    for (std::size_t k = 0; k < image.linear.size(); ++k) {
        double level = image.linear[k] * scale;
        if (image.linear[k] >= exposure.saturation) {
            image.quantized.pixels[k] = 255;
            continue;
        }
        if (exposure.noise_std > 0.0) {
            level += exposure.noise_std * noise(rng);
        }
        image.quantized.pixels[k] = static_cast<std::uint8_t>(std::clamp(std::lround(level), 0L, 255L));
    }
    return image;
}

}  // namespace evtrack::sim
