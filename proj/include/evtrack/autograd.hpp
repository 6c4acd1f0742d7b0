#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "evtrack/kernels.hpp"
#include "evtrack/ops.hpp"
#include "evtrack/tensor.hpp"

/// Tape-free reverse mode over the op set the tracker needs. Each op builds
/// a node holding its value, its parents and a closure that pushes the
/// node's gradient into the parents.
namespace evtrack::ag {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
public:
    Tensor value;
    Tensor grad;  // empty until something flows in
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    /// accumulate adds g into grad, allocating on first use.
    void accumulate(const Tensor& g);
    void zero_grad() { grad = Tensor(); }
};

/// leaf wraps a tensor; parameters pass requires_grad = true.
Var leaf(Tensor value, bool requires_grad = false);
inline Var constant(Tensor value) { return leaf(std::move(value), false); }
inline Var parameter(Tensor value) { return leaf(std::move(value), true); }

/// make_node links a new value into the graph. The closure is dropped when
/// no parent needs a gradient.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// backward seeds root with `seed` (same shape) and propagates to every
/// reachable node that requires a gradient.
void backward(const Var& root, const Tensor& seed);
/// Scalar root (size 1) seeded with 1.
void backward(const Var& root);

Var conv2d(const Var& x, const Var& weight, const Var& bias, const kernels::ConvGeometry& g);
Var depthwise_conv2d(const Var& x, const Var& kernels);
Var deform_conv2d(const Var& x, const Var& offsets, const Var& weight, const Var& bias,
                  const kernels::ConvGeometry& g);

Var sigmoid(const Var& x);
Var relu(const Var& x);
Var softmax(const Var& x, int axis);
Var reshape(const Var& x, std::vector<int> shape);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

/// Channel-broadcast ops: v is (1 or N, C, 1, 1), x is (N, C, H, W).
Var add_channel(const Var& x, const Var& v);
Var sub_channel(const Var& x, const Var& v);
Var mul_channel(const Var& x, const Var& v);
Var div_channel(const Var& x, const Var& v);

Var concat_channels(const Var& a, const Var& b);

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, bool train, ops::BatchNormState* state,
               double eps = ops::kNormEps);
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);

/// Per-channel mean and std (sqrt(var + eps)) over (N, H, W), each shaped
/// (1, C, 1, 1).
Var channel_mean(const Var& x);
Var channel_std(const Var& x, double eps = ops::kNormEps);

/// out[n, c] = sum_hw x[n, c, hw] * weights[n, 0, hw]; result (N, C, 1, 1).
Var spatial_weighted_sum(const Var& x, const Var& weights);

/// Scalar <x, weights> with constant weights.
Var weighted_sum(const Var& x, const Tensor& weights);
Var sum(const Var& x);

}  // namespace evtrack::ag
