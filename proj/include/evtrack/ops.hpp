#pragma once

#include "evtrack/tensor.hpp"

/// Elementwise and normalisation kernels with their vector-Jacobian
/// products. Backward functions return fresh gradient tensors.
namespace evtrack::ops {

Tensor sigmoid(const Tensor& x);
/// Gradient of sigmoid given its output y.
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

/// Max-subtracted softmax along one axis.
Tensor softmax_axis(const Tensor& x, int axis);
Tensor softmax_axis_backward(const Tensor& y, int axis, const Tensor& grad_out);

inline constexpr double kNormEps = 1e-5;

struct BatchNormState {
    Tensor running_mean;  // (C)
    Tensor running_var;   // (C)
    double momentum = 0.1;
};

struct BatchNormCache {
    Tensor normalized;  // x-hat
    Tensor inv_std;     // (C)
    bool train = true;
};

/// Train mode normalises by per-channel statistics over (N, H, W) and, when
/// `state` is given, folds them into the running averages (unbiased
/// variance). Eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, bool train, BatchNormState* state,
                  double eps, BatchNormCache* cache);
void batch_norm_backward(const Tensor& gamma, const BatchNormCache& cache, const Tensor& grad_out, Tensor& grad_x,
                         Tensor& grad_gamma, Tensor& grad_beta);

/// Averages bins [floor(i*H/out), ceil((i+1)*H/out)) along each axis.
Tensor adaptive_avg_pool(const Tensor& x, int out_h, int out_w);
Tensor adaptive_avg_pool_backward(const Shape4& input, const Tensor& grad_out);

struct ChannelStats {
    Tensor mean;   // (C)
    Tensor sigma;  // (C), sqrt(population variance + eps)
};

/// Per-channel mean and std over batch and space.
ChannelStats channel_stats(const Tensor& x, double eps = kNormEps);
Tensor channel_stats_backward(const Tensor& x, const ChannelStats& stats, const Tensor& grad_mean,
                              const Tensor& grad_sigma);

}  // namespace evtrack::ops
