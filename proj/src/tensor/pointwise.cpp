#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "evtrack/ops.hpp"

namespace evtrack::ops {

Tensor sigmoid(const Tensor& x) {
    Tensor y = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        // Split by sign so exp never overflows.
        if (v >= 0.0) {
            y[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            y[i] = e / (1.0 + e);
        }
    }
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
    Tensor g = Tensor::zeros_like(y);
    for (std::size_t i = 0; i < y.size(); ++i) {
        g[i] = grad_out[i] * y[i] * (1.0 - y[i]);
    }
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor y = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    Tensor g = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    }
    return g;
}

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank()) {
        throw std::invalid_argument("softmax axis " + std::to_string(axis) + " invalid for " + x.shape_string());
    }
    AxisSplit s;
    for (int d = 0; d < x.rank(); ++d) {
        const auto n = static_cast<std::size_t>(x.dim(d));
        if (d < axis) s.outer *= n;
        else if (d == axis) s.length = n;
        else s.inner *= n;
    }
    return s;
}

}  // namespace

Tensor softmax_axis(const Tensor& x, int axis) {
    const AxisSplit s = split_axis(x, axis);
    Tensor y = Tensor::zeros_like(x);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.length * s.inner + in;
            double peak = x[base];
            for (std::size_t k = 1; k < s.length; ++k) {
                peak = std::max(peak, x[base + k * s.inner]);
            }
            double total = 0.0;
            for (std::size_t k = 0; k < s.length; ++k) {
                const double e = std::exp(x[base + k * s.inner] - peak);
                y[base + k * s.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < s.length; ++k) {
                y[base + k * s.inner] /= total;
            }
        }
    }
    return y;
}

Tensor softmax_axis_backward(const Tensor& y, int axis, const Tensor& grad_out) {
    const AxisSplit s = split_axis(y, axis);
    Tensor g = Tensor::zeros_like(y);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.length * s.inner + in;
            double inner_product = 0.0;
            for (std::size_t k = 0; k < s.length; ++k) {
                inner_product += grad_out[base + k * s.inner] * y[base + k * s.inner];
            }
            for (std::size_t k = 0; k < s.length; ++k) {
                const std::size_t i = base + k * s.inner;
                g[i] = y[i] * (grad_out[i] - inner_product);
            }
        }
    }
    return g;
}

namespace {

void check_channel_vector(const Tensor& v, int channels, const char* what) {
    if (v.rank() != 1 || v.dim(0) != channels) {
        throw std::invalid_argument(std::string(what) + " must have " + std::to_string(channels) + " entries");
    }
}

}  // namespace

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, bool train, BatchNormState* state,
                  double eps, BatchNormCache* cache) {
    const Shape4 s = shape4(x, "batch_norm input");
    check_channel_vector(gamma, s.c, "batch_norm gamma");
    check_channel_vector(beta, s.c, "batch_norm beta");
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * static_cast<double>(plane);

    Tensor mean({s.c});
    Tensor var({s.c});
    if (train) {
        for (int c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const double* p = x.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            }
            const double m = acc / count;
            double sq = 0.0;
            for (int n = 0; n < s.n; ++n) {
                const double* p = x.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
            }
            mean[static_cast<std::size_t>(c)] = m;
            var[static_cast<std::size_t>(c)] = sq / count;
        }
        if (state) {
            const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
            for (int c = 0; c < s.c; ++c) {
                const auto ci = static_cast<std::size_t>(c);
                state->running_mean[ci] = (1.0 - state->momentum) * state->running_mean[ci] + state->momentum * mean[ci];
                state->running_var[ci] =
                    (1.0 - state->momentum) * state->running_var[ci] + state->momentum * var[ci] * unbias;
            }
        }
    } else {
        if (!state) {
            throw std::invalid_argument("eval-mode batch_norm needs running statistics");
        }
        mean = state->running_mean;
        var = state->running_var;
    }

    Tensor y = Tensor::zeros_like(x);
    Tensor normalized = Tensor::zeros_like(x);
    Tensor inv_std({s.c});
    for (int c = 0; c < s.c; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        inv_std[ci] = 1.0 / std::sqrt(var[ci] + eps);
        for (int n = 0; n < s.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (x[base + i] - mean[ci]) * inv_std[ci];
                normalized[base + i] = xh;
                y[base + i] = gamma[ci] * xh + beta[ci];
            }
        }
    }
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
        cache->train = train;
    }
    return y;
}

void batch_norm_backward(const Tensor& gamma, const BatchNormCache& cache, const Tensor& grad_out, Tensor& grad_x,
                         Tensor& grad_gamma, Tensor& grad_beta) {
    const Shape4 s = shape4(cache.normalized);
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * static_cast<double>(plane);
    grad_x = Tensor::zeros_like(cache.normalized);
    grad_gamma = Tensor({s.c});
    grad_beta = Tensor({s.c});
    for (int c = 0; c < s.c; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += grad_out[base + i];
                sum_gx += grad_out[base + i] * cache.normalized[base + i];
            }
        }
        grad_gamma[ci] = sum_gx;
        grad_beta[ci] = sum_g;
        const double scale = gamma[ci] * cache.inv_std[ci];
        for (int n = 0; n < s.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                if (cache.train) {
                    grad_x[base + i] =
                        scale * (grad_out[base + i] - sum_g / count - cache.normalized[base + i] * sum_gx / count);
                } else {
                    grad_x[base + i] = scale * grad_out[base + i];
                }
            }
        }
    }
}

namespace {

struct Bin {
    int start;
    int end;
};

Bin pool_bin(int index, int in, int out) {
    const int start = static_cast<int>((static_cast<long>(index) * in) / out);
    const int end = static_cast<int>((static_cast<long>(index + 1) * in + out - 1) / out);
    return {start, end};
}

}  // namespace

Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w) {
    const Shape4 s = shape4(x, "adaptive_avg_pool input");
    if (out_h <= 0 || out_w <= 0 || out_h > s.h || out_w > s.w) {
        throw std::invalid_argument("adaptive_avg_pool output must be within input size");
    }
    Tensor y({s.n, s.c, out_h, out_w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int i = 0; i < out_h; ++i) {
                const Bin rows = pool_bin(i, s.h, out_h);
                for (int j = 0; j < out_w; ++j) {
                    const Bin cols = pool_bin(j, s.w, out_w);
                    double acc = 0.0;
                    for (int h = rows.start; h < rows.end; ++h)
                        for (int w = cols.start; w < cols.end; ++w) acc += x.at(n, c, h, w);
                    y.at(n, c, i, j) = acc / ((rows.end - rows.start) * (cols.end - cols.start));
                }
            }
    return y;
}

Tensor adaptive_avg_pool_backward(const Shape4& input, const Tensor& grad_out) {
    const Shape4 o = shape4(grad_out);
    Tensor g({input.n, input.c, input.h, input.w});
    for (int n = 0; n < input.n; ++n)
        for (int c = 0; c < input.c; ++c)
            for (int i = 0; i < o.h; ++i) {
                const Bin rows = pool_bin(i, input.h, o.h);
                for (int j = 0; j < o.w; ++j) {
                    const Bin cols = pool_bin(j, input.w, o.w);
                    const double share =
                        grad_out.at(n, c, i, j) / ((rows.end - rows.start) * (cols.end - cols.start));
                    for (int h = rows.start; h < rows.end; ++h)
                        for (int w = cols.start; w < cols.end; ++w) g.at(n, c, h, w) += share;
                }
            }
    return g;
}

ChannelStats channel_stats(const Tensor& x, double eps) {
    const Shape4 s = shape4(x, "channel_stats input");
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * static_cast<double>(plane);
    ChannelStats stats{Tensor({s.c}), Tensor({s.c})};
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = x.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        }
        const double m = acc / count;
        double sq = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = x.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
        }
        stats.mean[static_cast<std::size_t>(c)] = m;
        stats.sigma[static_cast<std::size_t>(c)] = std::sqrt(sq / count + eps);
    }
    return stats;
}

Tensor channel_stats_backward(const Tensor& x, const ChannelStats& stats, const Tensor& grad_mean,
                              const Tensor& grad_sigma) {
    const Shape4 s = shape4(x);
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(s.n) * static_cast<double>(plane);
    Tensor g = Tensor::zeros_like(x);
    for (int c = 0; c < s.c; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const double a = grad_mean[ci] / count;
        const double b = grad_sigma[ci] / (count * stats.sigma[ci]);
        for (int n = 0; n < s.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                g[base + i] = a + b * (x[base + i] - stats.mean[ci]);
            }
        }
    }
    return g;
}

}  // namespace evtrack::ops
