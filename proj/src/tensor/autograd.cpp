#include "evtrack/autograd.hpp"

#include <stdexcept>
#include <string>
#include <unordered_set>

namespace evtrack::ag {

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
    } else {
        grad.add_(g);
    }
}

Var leaf(Tensor value, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& p : parents) {
        if (p && p->requires_grad) {
            node->requires_grad = true;
        }
    }
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return node;
}

void backward(const Var& root, const Tensor& seed) {
    if (!root->value.same_shape(seed)) {
        throw std::invalid_argument("backward seed shape " + seed.shape_string() + " does not match " +
                                    root->value.shape_string());
    }
    if (!root->requires_grad) {
        return;
    }
    // Post-order DFS gives a topological order; walk it backwards.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent && parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->accumulate(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) {
            node->backward_fn(*node);
        }
    }
}

void backward(const Var& root) {
    if (root->value.size() != 1) {
        throw std::invalid_argument("scalar backward needs a single-element root");
    }
    backward(root, Tensor(root->value.shape(), 1.0));
}

namespace {

bool wants(const Var& v) { return v && v->requires_grad; }

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, const kernels::ConvGeometry& g) {
    Tensor out = kernels::conv2d_forward(x->value, weight->value, bias ? &bias->value : nullptr, g);
    return make_node(std::move(out), {x, weight, bias}, [x, weight, bias, g](Node& self) {
        Tensor gx, gw, gb;
        if (wants(x)) gx = Tensor::zeros_like(x->value);
        if (wants(weight)) gw = Tensor::zeros_like(weight->value);
        if (wants(bias)) gb = Tensor::zeros_like(bias->value);
        kernels::conv2d_backward(x->value, weight->value, g, self.grad, wants(x) ? &gx : nullptr,
                                 wants(weight) ? &gw : nullptr, wants(bias) ? &gb : nullptr);
        if (wants(x)) x->accumulate(gx);
        if (wants(weight)) weight->accumulate(gw);
        if (wants(bias)) bias->accumulate(gb);
    });
}

Var depthwise_conv2d(const Var& x, const Var& kern) {
    Tensor out = kernels::depthwise_conv2d_forward(x->value, kern->value);
    return make_node(std::move(out), {x, kern}, [x, kern](Node& self) {
        Tensor gx, gk;
        if (wants(x)) gx = Tensor::zeros_like(x->value);
        if (wants(kern)) gk = Tensor::zeros_like(kern->value);
        kernels::depthwise_conv2d_backward(x->value, kern->value, self.grad, wants(x) ? &gx : nullptr,
                                           wants(kern) ? &gk : nullptr);
        if (wants(x)) x->accumulate(gx);
        if (wants(kern)) kern->accumulate(gk);
    });
}

Var deform_conv2d(const Var& x, const Var& offsets, const Var& weight, const Var& bias,
                  const kernels::ConvGeometry& g) {
    Tensor out = kernels::deform_conv2d_forward(x->value, offsets->value, weight->value,
                                                bias ? &bias->value : nullptr, g);
    return make_node(std::move(out), {x, offsets, weight, bias}, [x, offsets, weight, bias, g](Node& self) {
        Tensor gx, go, gw, gb;
        if (wants(x)) gx = Tensor::zeros_like(x->value);
        if (wants(offsets)) go = Tensor::zeros_like(offsets->value);
        if (wants(weight)) gw = Tensor::zeros_like(weight->value);
        if (wants(bias)) gb = Tensor::zeros_like(bias->value);
        kernels::deform_conv2d_backward(x->value, offsets->value, weight->value, g, self.grad,
                                        wants(x) ? &gx : nullptr, wants(offsets) ? &go : nullptr,
                                        wants(weight) ? &gw : nullptr, wants(bias) ? &gb : nullptr);
        if (wants(x)) x->accumulate(gx);
        if (wants(offsets)) offsets->accumulate(go);
        if (wants(weight)) weight->accumulate(gw);
        if (wants(bias)) bias->accumulate(gb);
    });
}

Var sigmoid(const Var& x) {
    Tensor y = ops::sigmoid(x->value);
    return make_node(y, {x}, [x, y](Node& self) { x->accumulate(ops::sigmoid_backward(y, self.grad)); });
}

Var relu(const Var& x) {
    return make_node(ops::relu(x->value), {x},
                     [x](Node& self) { x->accumulate(ops::relu_backward(x->value, self.grad)); });
}

Var softmax(const Var& x, int axis) {
    Tensor y = ops::softmax_axis(x->value, axis);
    return make_node(y, {x}, [x, y, axis](Node& self) {
        x->accumulate(ops::softmax_axis_backward(y, axis, self.grad));
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    return make_node(x->value.reshaped(std::move(shape)), {x},
                     [x](Node& self) { x->accumulate(self.grad.reshaped(x->value.shape())); });
}

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw std::invalid_argument(std::string(op) + ": shape " + a->value.shape_string() + " vs " +
                                    b->value.shape_string());
    }
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    Tensor out = a->value;
    out.add_(b->value);
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (wants(a)) a->accumulate(self.grad);
        if (wants(b)) b->accumulate(self.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& self) {
        if (wants(a)) {
            Tensor g = self.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= b->value[i];
            a->accumulate(g);
        }
        if (wants(b)) {
            Tensor g = self.grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a->value[i];
            b->accumulate(g);
        }
    });
}

Var scale(const Var& a, double factor) {
    Tensor out = a->value;
    out.scale_(factor);
    return make_node(std::move(out), {a}, [a, factor](Node& self) {
        Tensor g = self.grad;
        g.scale_(factor);
        a->accumulate(g);
    });
}

namespace {

enum class ChannelOp { Add, Sub, Mul, Div };

Var channel_op(const Var& x, const Var& v, ChannelOp op) {
    const Shape4 xs = shape4(x->value, "channel-broadcast input");
    const Shape4 vs = shape4(v->value, "channel-broadcast operand");
    if (vs.c != xs.c || vs.h != 1 || vs.w != 1 || (vs.n != 1 && vs.n != xs.n)) {
        throw std::invalid_argument("channel operand " + v->value.shape_string() + " does not broadcast over " +
                                    x->value.shape_string());
    }
    const std::size_t plane = xs.plane();
    auto vindex = [vs](int n, int c) { return static_cast<std::size_t>(vs.n == 1 ? 0 : n) * vs.c + c; };
    Tensor out = Tensor::zeros_like(x->value);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
            const double s = v->value[vindex(n, c)];
            const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double a = x->value[base + i];
                switch (op) {
                    case ChannelOp::Add: out[base + i] = a + s; break;
                    case ChannelOp::Sub: out[base + i] = a - s; break;
                    case ChannelOp::Mul: out[base + i] = a * s; break;
                    case ChannelOp::Div: out[base + i] = a / s; break;
                }
            }
        }
    return make_node(std::move(out), {x, v}, [x, v, op, xs, plane, vindex](Node& self) {
        Tensor gx = wants(x) ? Tensor::zeros_like(x->value) : Tensor();
        Tensor gv = wants(v) ? Tensor::zeros_like(v->value) : Tensor();
        for (int n = 0; n < xs.n; ++n)
            for (int c = 0; c < xs.c; ++c) {
                const std::size_t vi = vindex(n, c);
                const double s = v->value[vi];
                const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double g = self.grad[base + i];
                    const double a = x->value[base + i];
                    double dx = 0.0, dv = 0.0;
                    switch (op) {
                        case ChannelOp::Add: dx = g; dv = g; break;
                        case ChannelOp::Sub: dx = g; dv = -g; break;
                        case ChannelOp::Mul: dx = g * s; dv = g * a; break;
                        case ChannelOp::Div: dx = g / s; dv = -g * a / (s * s); break;
                    }
                    if (!gx.empty()) gx[base + i] = dx;
                    acc += dv;
                }
                if (!gv.empty()) gv[vi] += acc;
            }
        if (!gx.empty()) x->accumulate(gx);
        if (!gv.empty()) v->accumulate(gv);
    });
}

}  // namespace

Var add_channel(const Var& x, const Var& v) { return channel_op(x, v, ChannelOp::Add); }
Var sub_channel(const Var& x, const Var& v) { return channel_op(x, v, ChannelOp::Sub); }
Var mul_channel(const Var& x, const Var& v) { return channel_op(x, v, ChannelOp::Mul); }
Var div_channel(const Var& x, const Var& v) { return channel_op(x, v, ChannelOp::Div); }

Var concat_channels(const Var& a, const Var& b) {
    const Shape4 as = shape4(a->value, "concat input");
    const Shape4 bs = shape4(b->value, "concat input");
    if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
        throw std::invalid_argument("concat_channels: " + a->value.shape_string() + " vs " + b->value.shape_string());
    }
    const std::size_t plane = as.plane();
    Tensor out({as.n, as.c + bs.c, as.h, as.w});
    for (int n = 0; n < as.n; ++n) {
        std::copy_n(a->value.data() + static_cast<std::size_t>(n) * as.c * plane, as.c * plane,
                    out.data() + static_cast<std::size_t>(n) * (as.c + bs.c) * plane);
        std::copy_n(b->value.data() + static_cast<std::size_t>(n) * bs.c * plane, bs.c * plane,
                    out.data() + (static_cast<std::size_t>(n) * (as.c + bs.c) + as.c) * plane);
    }
    return make_node(std::move(out), {a, b}, [a, b, as, bs, plane](Node& self) {
        Tensor ga = Tensor::zeros_like(a->value);
        Tensor gb = Tensor::zeros_like(b->value);
        for (int n = 0; n < as.n; ++n) {
            const double* g = self.grad.data() + static_cast<std::size_t>(n) * (as.c + bs.c) * plane;
            std::copy_n(g, as.c * plane, ga.data() + static_cast<std::size_t>(n) * as.c * plane);
            std::copy_n(g + as.c * plane, bs.c * plane, gb.data() + static_cast<std::size_t>(n) * bs.c * plane);
        }
        if (wants(a)) a->accumulate(ga);
        if (wants(b)) b->accumulate(gb);
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, bool train, ops::BatchNormState* state, double eps) {
    auto cache = std::make_shared<ops::BatchNormCache>();
    Tensor out = ops::batch_norm(x->value, gamma->value, beta->value, train, state, eps, cache.get());
    return make_node(std::move(out), {x, gamma, beta}, [x, gamma, beta, cache](Node& self) {
        Tensor gx, gg, gb;
        ops::batch_norm_backward(gamma->value, *cache, self.grad, gx, gg, gb);
        if (wants(x)) x->accumulate(gx);
        if (wants(gamma)) gamma->accumulate(gg);
        if (wants(beta)) beta->accumulate(gb);
    });
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
    const Shape4 s = shape4(x->value);
    return make_node(ops::adaptive_avg_pool(x->value, out_h, out_w), {x},
                     [x, s](Node& self) { x->accumulate(ops::adaptive_avg_pool_backward(s, self.grad)); });
}

Var channel_mean(const Var& x) {
    const Shape4 s = shape4(x->value, "channel_mean input");
    auto stats = ops::channel_stats(x->value);
    Tensor out = stats.mean.reshaped({1, s.c, 1, 1});
    return make_node(std::move(out), {x}, [x, s, stats](Node& self) {
        x->accumulate(ops::channel_stats_backward(x->value, stats, self.grad.reshaped({s.c}), Tensor({s.c})));
    });
}

Var channel_std(const Var& x, double eps) {
    const Shape4 s = shape4(x->value, "channel_std input");
    auto stats = ops::channel_stats(x->value, eps);
    Tensor out = stats.sigma.reshaped({1, s.c, 1, 1});
    return make_node(std::move(out), {x}, [x, s, stats](Node& self) {
        x->accumulate(ops::channel_stats_backward(x->value, stats, Tensor({s.c}), self.grad.reshaped({s.c})));
    });
}

Var spatial_weighted_sum(const Var& x, const Var& weights) {
    const Shape4 xs = shape4(x->value, "spatial_weighted_sum input");
    const Shape4 ws = shape4(weights->value, "spatial weights");
    if (ws.n != xs.n || ws.c != 1 || ws.h != xs.h || ws.w != xs.w) {
        throw std::invalid_argument("spatial weights must be (N, 1, H, W) matching " + x->value.shape_string());
    }
    const std::size_t plane = xs.plane();
    Tensor out({xs.n, xs.c, 1, 1});
    for (int n = 0; n < xs.n; ++n) {
        const double* a = weights->value.data() + static_cast<std::size_t>(n) * plane;
        for (int c = 0; c < xs.c; ++c) {
            const double* f = x->value.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += f[i] * a[i];
            out[static_cast<std::size_t>(n) * xs.c + c] = acc;
        }
    }
    return make_node(std::move(out), {x, weights}, [x, weights, xs, plane](Node& self) {
        Tensor gx = Tensor::zeros_like(x->value);
        Tensor gw = Tensor::zeros_like(weights->value);
        for (int n = 0; n < xs.n; ++n) {
            const double* a = weights->value.data() + static_cast<std::size_t>(n) * plane;
            double* ga = gw.data() + static_cast<std::size_t>(n) * plane;
            for (int c = 0; c < xs.c; ++c) {
                const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
                const double g = self.grad[static_cast<std::size_t>(n) * xs.c + c];
                for (std::size_t i = 0; i < plane; ++i) {
                    gx[base + i] = g * a[i];
                    ga[i] += g * x->value[base + i];
                }
            }
        }
        if (wants(x)) x->accumulate(gx);
        if (wants(weights)) weights->accumulate(gw);
    });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
    if (weights.size() != x->value.size()) {
        throw std::invalid_argument("weighted_sum: size mismatch");
    }
    Tensor out({1}, x->value.dot(weights));
    return make_node(std::move(out), {x}, [x, weights](Node& self) {
        Tensor g = weights.reshaped(x->value.shape());
        g.scale_(self.grad[0]);
        x->accumulate(g);
    });
}

Var sum(const Var& x) {
    Tensor out({1}, x->value.sum());
    return make_node(std::move(out), {x}, [x](Node& self) { x->accumulate(Tensor(x->value.shape(), self.grad[0])); });
}

}  // namespace evtrack::ag
