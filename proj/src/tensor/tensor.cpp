#include "evtrack/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace evtrack {

namespace {

std::size_t element_count(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw std::invalid_argument("tensor rank must be 1..4");
    }
    std::size_t count = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("tensor dimensions must be positive");
        }
        count *= static_cast<std::size_t>(d);
    }
    return count;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw std::invalid_argument("data length does not match shape " + shape_string());
    }
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, double stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data_) {
        v = dist(rng);
    }
    return t;
}

Tensor Tensor::uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data_) {
        v = dist(rng);
    }
    return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    Tensor out;
    if (element_count(shape) != data_.size()) {
        throw std::invalid_argument("cannot reshape " + shape_string());
    }
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other) {
    if (shape_ != other.shape_) {
        throw std::invalid_argument("add_: shape " + shape_string() + " vs " + other.shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
}

void Tensor::scale_(double factor) {
    for (double& v : data_) {
        v *= factor;
    }
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::dot(const Tensor& other) const {
    if (data_.size() != other.data_.size()) {
        throw std::invalid_argument("dot: size mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        acc += data_[i] * other.data_[i];
    }
    return acc;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

std::string Tensor::shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        s += (i ? "," : "") + std::to_string(shape_[i]);
    }
    return s + ")";
}

Shape4 shape4(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw std::invalid_argument(std::string(what) + " must be rank 4 (N,C,H,W), got " + t.shape_string());
    }
    return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace evtrack
