#pragma once

#include <optional>

#include "evtrack/tensor.hpp"

/// Convolution-family kernels with explicit vector-Jacobian products.
///
/// Every kernel exists twice: the default versions in `evtrack::kernels`
/// parallelise over disjoint output planes with OpenMP (each plane is
/// reduced in a fixed order, so results are thread-count independent), and
/// the naive serial versions in `evtrack::kernels::ref` are kept as the
/// testing reference. Backward functions accumulate into the given gradient
/// tensors (which must be pre-shaped); pass nullptr to skip one.
namespace evtrack::kernels {

struct ConvGeometry {
    int stride = 1;
    int padding = 0;
    int groups = 1;
};

/// Weight (C_out, C_in/groups, K, K) plus optional bias (C_out).
struct ConvParams {
    Tensor weight;
    std::optional<Tensor> bias;
    ConvGeometry geometry;
};

int conv_output_size(int input, int kernel, int stride, int padding);

/// validate_conv throws std::invalid_argument on inconsistent shapes.
void validate_conv(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g);

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g);
void conv2d_backward(const Tensor& x, const Tensor& weight, const ConvGeometry& g, const Tensor& grad_out,
                     Tensor* grad_x, Tensor* grad_weight, Tensor* grad_bias);

inline Tensor conv2d(const Tensor& x, const ConvParams& p) {
    return conv2d_forward(x, p.weight, p.bias ? &*p.bias : nullptr, p.geometry);
}

/// Per-sample depthwise convolution: kernels (N, C, K, K), stride 1,
/// padding (K-1)/2, so the output keeps the input's spatial size.
Tensor depthwise_conv2d_forward(const Tensor& x, const Tensor& kernels);
void depthwise_conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& grad_out, Tensor* grad_x,
                               Tensor* grad_kernels);

/// Deformable convolution (groups = 1, one offset group). Offsets have
/// shape (N, 2*K*K, H_out, W_out); channel 2*tap holds dy and 2*tap+1 holds
/// dx for tap = i*K + j. Samples are bilinear; outside the image reads 0.
Tensor deform_conv2d_forward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const Tensor* bias,
                             const ConvGeometry& g);
void deform_conv2d_backward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const ConvGeometry& g,
                            const Tensor& grad_out, Tensor* grad_x, Tensor* grad_offsets, Tensor* grad_weight,
                            Tensor* grad_bias);

/// Zero-padded bilinear read of one plane at fractional (y, x).
double bilinear_sample(const double* plane, int height, int width, double y, double x);

/// Partial derivatives of bilinear_sample w.r.t. y and x (right-limit on
/// the integer lattice).
void bilinear_sample_grad(const double* plane, int height, int width, double y, double x, double& dy, double& dx);

/// Distributes `g` onto the four neighbours of (y, x) with bilinear weights.
void bilinear_scatter(double* plane, int height, int width, double y, double x, double g);

namespace ref {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g);
void conv2d_backward(const Tensor& x, const Tensor& weight, const ConvGeometry& g, const Tensor& grad_out,
                     Tensor* grad_x, Tensor* grad_weight, Tensor* grad_bias);
Tensor depthwise_conv2d_forward(const Tensor& x, const Tensor& kernels);
void depthwise_conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& grad_out, Tensor* grad_x,
                               Tensor* grad_kernels);
Tensor deform_conv2d_forward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const Tensor* bias,
                             const ConvGeometry& g);
void deform_conv2d_backward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const ConvGeometry& g,
                            const Tensor& grad_out, Tensor* grad_x, Tensor* grad_offsets, Tensor* grad_weight,
                            Tensor* grad_bias);

}  // namespace ref

}  // namespace evtrack::kernels
