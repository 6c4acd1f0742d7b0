#include <cmath>
#include <stdexcept>
#include <string>

#include "evtrack/kernels.hpp"
#include "kernels_internal.hpp"

namespace evtrack::kernels {

int conv_output_size(int input, int kernel, int stride, int padding) {
    const int span = input + 2 * padding - kernel;
    if (span < 0 || stride <= 0) {
        throw std::invalid_argument("convolution kernel larger than padded input");
    }
    return span / stride + 1;
}

void validate_conv(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g) {
    const Shape4 xs = shape4(x, "conv input");
    const Shape4 ws = shape4(weight, "conv weight");
    if (g.groups <= 0 || xs.c % g.groups != 0 || ws.n % g.groups != 0) {
        throw std::invalid_argument("groups must divide C_in and C_out");
    }
    if (ws.c * g.groups != xs.c) {
        throw std::invalid_argument("conv weight expects " + std::to_string(ws.c * g.groups) +
                                    " input channels, got " + std::to_string(xs.c));
    }
    if (ws.h != ws.w || ws.h % 2 == 0) {
        throw std::invalid_argument("conv kernels must be square with odd size");
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != ws.n)) {
        throw std::invalid_argument("conv bias must have C_out entries");
    }
    if (g.stride <= 0 || g.padding < 0) {
        throw std::invalid_argument("invalid stride/padding");
    }
    conv_output_size(xs.h, ws.h, g.stride, g.padding);
    conv_output_size(xs.w, ws.w, g.stride, g.padding);
}

double bilinear_sample(const double* plane, int height, int width, double y, double x) {
    if (y <= -1.0 || y >= height || x <= -1.0 || x >= width) {
        return 0.0;
    }
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = y0 + 1;
    const int x1 = x0 + 1;
    const double ly = y - y0;
    const double lx = x - x0;
    const double hy = 1.0 - ly;
    const double hx = 1.0 - lx;
    const double v00 = (y0 >= 0 && x0 >= 0) ? plane[y0 * width + x0] : 0.0;
    const double v01 = (y0 >= 0 && x1 < width) ? plane[y0 * width + x1] : 0.0;
    const double v10 = (y1 < height && x0 >= 0) ? plane[y1 * width + x0] : 0.0;
    const double v11 = (y1 < height && x1 < width) ? plane[y1 * width + x1] : 0.0;
    return hy * hx * v00 + hy * lx * v01 + ly * hx * v10 + ly * lx * v11;
}

void bilinear_sample_grad(const double* plane, int height, int width, double y, double x, double& dy, double& dx) {
    dy = 0.0;
    dx = 0.0;
    if (y <= -1.0 || y >= height || x <= -1.0 || x >= width) {
        return;
    }
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = y0 + 1;
    const int x1 = x0 + 1;
    const double ly = y - y0;
    const double lx = x - x0;
    const double hy = 1.0 - ly;
    const double hx = 1.0 - lx;
    const double v00 = (y0 >= 0 && x0 >= 0) ? plane[y0 * width + x0] : 0.0;
    const double v01 = (y0 >= 0 && x1 < width) ? plane[y0 * width + x1] : 0.0;
    const double v10 = (y1 < height && x0 >= 0) ? plane[y1 * width + x0] : 0.0;
    const double v11 = (y1 < height && x1 < width) ? plane[y1 * width + x1] : 0.0;
    dy = -hx * v00 - lx * v01 + hx * v10 + lx * v11;
    dx = -hy * v00 + hy * v01 - ly * v10 + ly * v11;
}

void bilinear_scatter(double* plane, int height, int width, double y, double x, double g) {
    if (y <= -1.0 || y >= height || x <= -1.0 || x >= width) {
        return;
    }
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = y0 + 1;
    const int x1 = x0 + 1;
    const double ly = y - y0;
    const double lx = x - x0;
    const double hy = 1.0 - ly;
    const double hx = 1.0 - lx;
    if (y0 >= 0 && x0 >= 0) plane[y0 * width + x0] += hy * hx * g;
    if (y0 >= 0 && x1 < width) plane[y0 * width + x1] += hy * lx * g;
    if (y1 < height && x0 >= 0) plane[y1 * width + x0] += ly * hx * g;
    if (y1 < height && x1 < width) plane[y1 * width + x1] += ly * lx * g;
}

void validate_deform(const Tensor& x, const Tensor& offsets, const Tensor& weight, const Tensor* bias,
                     const ConvGeometry& g) {
    if (g.groups != 1) {
        throw std::invalid_argument("deformable convolution supports groups = 1 only");
    }
    validate_conv(x, weight, bias, g);
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const Shape4 offs = shape4(offsets, "offsets");
    const int ho = conv_output_size(xs.h, ws.h, g.stride, g.padding);
    const int wo = conv_output_size(xs.w, ws.w, g.stride, g.padding);
    if (offs.n != xs.n || offs.c != 2 * ws.h * ws.w || offs.h != ho || offs.w != wo) {
        throw std::invalid_argument("offsets must have shape (N, 2*K*K, H_out, W_out), got " + offsets.shape_string());
    }
}

namespace ref {

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g) {
    validate_conv(x, weight, bias, g);
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const int k = ws.h;
    const int ho = conv_output_size(xs.h, k, g.stride, g.padding);
    const int wo = conv_output_size(xs.w, k, g.stride, g.padding);
    const int cout_per_group = ws.n / g.groups;
    Tensor out({xs.n, ws.n, ho, wo});
    for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
            const int group = co / cout_per_group;
            for (int oh = 0; oh < ho; ++oh) {
                for (int ow = 0; ow < wo; ++ow) {
                    double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
                    for (int cl = 0; cl < ws.c; ++cl) {
                        const int ci = group * ws.c + cl;
                        for (int i = 0; i < k; ++i) {
                            for (int j = 0; j < k; ++j) {
                                const int ih = oh * g.stride - g.padding + i;
                                const int iw = ow * g.stride - g.padding + j;
                                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                                acc += weight.at(co, cl, i, j) * x.at(n, ci, ih, iw);
                            }
                        }
                    }
                    out.at(n, co, oh, ow) = acc;
                }
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& x, const Tensor& weight, const ConvGeometry& g, const Tensor& grad_out,
                     Tensor* grad_x, Tensor* grad_weight, Tensor* grad_bias) {
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const Shape4 os = shape4(grad_out);
    const int k = ws.h;
    const int cout_per_group = ws.n / g.groups;
    for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
            const int group = co / cout_per_group;
            for (int oh = 0; oh < os.h; ++oh) {
                for (int ow = 0; ow < os.w; ++ow) {
                    const double go = grad_out.at(n, co, oh, ow);
                    if (grad_bias) (*grad_bias)[static_cast<std::size_t>(co)] += go;
                    for (int cl = 0; cl < ws.c; ++cl) {
                        const int ci = group * ws.c + cl;
                        for (int i = 0; i < k; ++i) {
                            for (int j = 0; j < k; ++j) {
                                const int ih = oh * g.stride - g.padding + i;
                                const int iw = ow * g.stride - g.padding + j;
                                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                                if (grad_x) grad_x->at(n, ci, ih, iw) += weight.at(co, cl, i, j) * go;
                                if (grad_weight) grad_weight->at(co, cl, i, j) += x.at(n, ci, ih, iw) * go;
                            }
                        }
                    }
                }
            }
        }
    }
}

Tensor depthwise_conv2d_forward(const Tensor& x, const Tensor& kernels) {
    const Shape4 xs = shape4(x, "depthwise input");
    const Shape4 ks = shape4(kernels, "depthwise kernels");
    if (ks.n != xs.n || ks.c != xs.c || ks.h != ks.w || ks.h % 2 == 0) {
        throw std::invalid_argument("depthwise kernels must be (N, C, K, K) with odd K matching the input");
    }
    const int r = ks.h / 2;
    Tensor out({xs.n, xs.c, xs.h, xs.w});
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int h = 0; h < xs.h; ++h)
                for (int w = 0; w < xs.w; ++w) {
                    double acc = 0.0;
                    for (int i = 0; i < ks.h; ++i)
                        for (int j = 0; j < ks.w; ++j) {
                            const int ih = h + i - r;
                            const int iw = w + j - r;
                            if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                            acc += kernels.at(n, c, i, j) * x.at(n, c, ih, iw);
                        }
                    out.at(n, c, h, w) = acc;
                }
    return out;
}

void depthwise_conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& grad_out, Tensor* grad_x,
                               Tensor* grad_kernels) {
    const Shape4 xs = shape4(x);
    const Shape4 ks = shape4(kernels);
    const int r = ks.h / 2;
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int h = 0; h < xs.h; ++h)
                for (int w = 0; w < xs.w; ++w) {
                    const double go = grad_out.at(n, c, h, w);
                    for (int i = 0; i < ks.h; ++i)
                        for (int j = 0; j < ks.w; ++j) {
                            const int ih = h + i - r;
                            const int iw = w + j - r;
                            if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                            if (grad_x) grad_x->at(n, c, ih, iw) += kernels.at(n, c, i, j) * go;
                            if (grad_kernels) grad_kernels->at(n, c, i, j) += x.at(n, c, ih, iw) * go;
                        }
                }
}

Tensor deform_conv2d_forward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const Tensor* bias,
                             const ConvGeometry& g) {
    validate_deform(x, offsets, weight, bias, g);
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const Shape4 offs = shape4(offsets);
    const int k = ws.h;
    Tensor out({xs.n, ws.n, offs.h, offs.w});
    for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < ws.n; ++co)
            for (int oh = 0; oh < offs.h; ++oh)
                for (int ow = 0; ow < offs.w; ++ow) {
                    double acc = bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0;
                    for (int ci = 0; ci < xs.c; ++ci)
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) {
                                const int tap = i * k + j;
                                const double py = oh * g.stride - g.padding + i + offsets.at(n, 2 * tap, oh, ow);
                                const double px = ow * g.stride - g.padding + j + offsets.at(n, 2 * tap + 1, oh, ow);
                                const double* plane = x.data() + (static_cast<std::size_t>(n) * xs.c + ci) * xs.plane();
                                acc += weight.at(co, ci, i, j) * bilinear_sample(plane, xs.h, xs.w, py, px);
                            }
                    out.at(n, co, oh, ow) = acc;
                }
    return out;
}

void deform_conv2d_backward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const ConvGeometry& g,
                            const Tensor& grad_out, Tensor* grad_x, Tensor* grad_offsets, Tensor* grad_weight,
                            Tensor* grad_bias) {
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const Shape4 offs = shape4(offsets);
    const int k = ws.h;
    for (int n = 0; n < xs.n; ++n)
        for (int co = 0; co < ws.n; ++co)
            for (int oh = 0; oh < offs.h; ++oh)
                for (int ow = 0; ow < offs.w; ++ow) {
                    const double go = grad_out.at(n, co, oh, ow);
                    if (grad_bias) (*grad_bias)[static_cast<std::size_t>(co)] += go;
                    for (int ci = 0; ci < xs.c; ++ci)
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) {
                                const int tap = i * k + j;
                                const double py = oh * g.stride - g.padding + i + offsets.at(n, 2 * tap, oh, ow);
                                const double px = ow * g.stride - g.padding + j + offsets.at(n, 2 * tap + 1, oh, ow);
                                const std::size_t plane_off = (static_cast<std::size_t>(n) * xs.c + ci) * xs.plane();
                                const double* plane = x.data() + plane_off;
                                const double w = weight.at(co, ci, i, j);
                                if (grad_weight) {
                                    grad_weight->at(co, ci, i, j) += go * bilinear_sample(plane, xs.h, xs.w, py, px);
                                }
                                if (grad_x) {
                                    bilinear_scatter(grad_x->data() + plane_off, xs.h, xs.w, py, px, go * w);
                                }
                                if (grad_offsets) {
                                    double dy = 0.0, dx = 0.0;
                                    bilinear_sample_grad(plane, xs.h, xs.w, py, px, dy, dx);
                                    grad_offsets->at(n, 2 * tap, oh, ow) += go * w * dy;
                                    grad_offsets->at(n, 2 * tap + 1, oh, ow) += go * w * dx;
                                }
                            }
                }
}

}  // namespace ref

}  // namespace evtrack::kernels
