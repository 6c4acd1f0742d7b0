#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace evtrack {

/// Dense row-major tensor of doubles, rank 1..4. Feature maps use
/// (N, C, H, W).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
    /// Normal(0, stddev) entries from a seeded engine.
    static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Rank-4 element access.
    double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    Tensor reshaped(std::vector<int> shape) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    void fill(double value);
    /// this += other (same shape).
    void add_(const Tensor& other);
    void scale_(double factor);

    double sum() const;
    double dot(const Tensor& other) const;
    double max_abs() const;

    std::string shape_string() const;

    bool operator==(const Tensor&) const = default;

private:
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

struct Shape4 {
    int n, c, h, w;
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
};

/// shape4 throws std::invalid_argument unless t has rank 4.
Shape4 shape4(const Tensor& t, const char* what = "tensor");

/// max_abs_diff requires equal shapes.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace evtrack
