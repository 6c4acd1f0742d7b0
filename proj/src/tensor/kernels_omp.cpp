#include <algorithm>
#include <stdexcept>
#include <vector>

#include "evtrack/kernels.hpp"
#include "kernels_internal.hpp"

namespace evtrack::kernels {

namespace {

// Output indices whose input coordinate o*stride - pad + tap lies in [0, n).
struct ValidRange {
    int lo;
    int hi;  // exclusive
};

ValidRange valid_outputs(int out_size, int in_size, int stride, int pad, int tap) {
    int lo = 0;
    const int shift = pad - tap;
    if (shift > 0) {
        lo = (shift + stride - 1) / stride;
    }
    int hi = out_size;
    const int top = in_size - 1 + pad - tap;
    if (top < 0) {
        return {0, 0};
    }
    hi = std::min(hi, top / stride + 1);
    return {lo, std::max(lo, hi)};
}

std::size_t plane_index(int n, int c, int channels, std::size_t plane) {
    return (static_cast<std::size_t>(n) * channels + c) * plane;
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const Tensor* bias, const ConvGeometry& g) {
    validate_conv(x, weight, bias, g);
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const int k = ws.h;
    const int ho = conv_output_size(xs.h, k, g.stride, g.padding);
    const int wo = conv_output_size(xs.w, k, g.stride, g.padding);
    const int cout_per_group = ws.n / g.groups;
    Tensor out({xs.n, ws.n, ho, wo});
    const std::size_t in_plane = xs.plane();
    const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;
    const int jobs = xs.n * ws.n;

#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int n = job / ws.n;
        const int co = job % ws.n;
        const int group = co / cout_per_group;
        double* o = out.data() + plane_index(n, co, ws.n, out_plane);
        std::fill(o, o + out_plane, bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0);
        for (int cl = 0; cl < ws.c; ++cl) {
            const double* in = x.data() + plane_index(n, group * ws.c + cl, xs.c, in_plane);
            for (int i = 0; i < k; ++i) {
                const ValidRange rows = valid_outputs(ho, xs.h, g.stride, g.padding, i);
                for (int j = 0; j < k; ++j) {
                    const ValidRange cols = valid_outputs(wo, xs.w, g.stride, g.padding, j);
                    const double w = weight.at(co, cl, i, j);
                    for (int oh = rows.lo; oh < rows.hi; ++oh) {
                        const double* in_row = in + static_cast<std::size_t>(oh * g.stride - g.padding + i) * xs.w;
                        double* out_row = o + static_cast<std::size_t>(oh) * wo;
                        for (int ow = cols.lo; ow < cols.hi; ++ow) {
                            out_row[ow] += w * in_row[ow * g.stride - g.padding + j];
                        }
                    }
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
    const Shape4 os = shape4(grad_out, "conv grad_out");
    const int k = ws.h;
    const int cout_per_group = ws.n / g.groups;
    const std::size_t in_plane = xs.plane();
    const std::size_t out_plane = os.plane();

    if (grad_x) {
        const int jobs = xs.n * xs.c;
#pragma omp parallel for schedule(static)
        for (int job = 0; job < jobs; ++job) {
            const int n = job / xs.c;
            const int ci = job % xs.c;
            const int group = ci / ws.c;
            const int cl = ci % ws.c;
            double* gx = grad_x->data() + plane_index(n, ci, xs.c, in_plane);
            for (int co = group * cout_per_group; co < (group + 1) * cout_per_group; ++co) {
                const double* go = grad_out.data() + plane_index(n, co, os.c, out_plane);
                for (int i = 0; i < k; ++i) {
                    const ValidRange rows = valid_outputs(os.h, xs.h, g.stride, g.padding, i);
                    for (int j = 0; j < k; ++j) {
                        const ValidRange cols = valid_outputs(os.w, xs.w, g.stride, g.padding, j);
                        const double w = weight.at(co, cl, i, j);
                        for (int oh = rows.lo; oh < rows.hi; ++oh) {
                            double* gx_row = gx + static_cast<std::size_t>(oh * g.stride - g.padding + i) * xs.w;
                            const double* go_row = go + static_cast<std::size_t>(oh) * os.w;
                            for (int ow = cols.lo; ow < cols.hi; ++ow) {
                                gx_row[ow * g.stride - g.padding + j] += w * go_row[ow];
                            }
                        }
                    }
                }
            }
        }
    }

    if (grad_weight) {
        const int jobs = ws.n * ws.c;
#pragma omp parallel for schedule(static)
        for (int job = 0; job < jobs; ++job) {
            const int co = job / ws.c;
            const int cl = job % ws.c;
            const int ci = (co / cout_per_group) * ws.c + cl;
            for (int i = 0; i < k; ++i) {
                const ValidRange rows = valid_outputs(os.h, xs.h, g.stride, g.padding, i);
                for (int j = 0; j < k; ++j) {
                    const ValidRange cols = valid_outputs(os.w, xs.w, g.stride, g.padding, j);
                    double acc = 0.0;
                    for (int n = 0; n < xs.n; ++n) {
                        const double* in = x.data() + plane_index(n, ci, xs.c, in_plane);
                        const double* go = grad_out.data() + plane_index(n, co, os.c, out_plane);
                        for (int oh = rows.lo; oh < rows.hi; ++oh) {
                            const double* in_row = in + static_cast<std::size_t>(oh * g.stride - g.padding + i) * xs.w;
                            const double* go_row = go + static_cast<std::size_t>(oh) * os.w;
                            for (int ow = cols.lo; ow < cols.hi; ++ow) {
                                acc += in_row[ow * g.stride - g.padding + j] * go_row[ow];
                            }
                        }
                    }
                    grad_weight->at(co, cl, i, j) += acc;
                }
            }
        }
    }

    if (grad_bias) {
        for (int co = 0; co < ws.n; ++co) {
            double acc = 0.0;
            for (int n = 0; n < os.n; ++n) {
                const double* go = grad_out.data() + plane_index(n, co, os.c, out_plane);
                for (std::size_t p = 0; p < out_plane; ++p) {
                    acc += go[p];
                }
            }
            (*grad_bias)[static_cast<std::size_t>(co)] += acc;
        }
    }
}

Tensor depthwise_conv2d_forward(const Tensor& x, const Tensor& kernels) {
    const Shape4 xs = shape4(x, "depthwise input");
    const Shape4 ks = shape4(kernels, "depthwise kernels");
    if (ks.n != xs.n || ks.c != xs.c || ks.h != ks.w || ks.h % 2 == 0) {
        throw std::invalid_argument("depthwise kernels must be (N, C, K, K) with odd K matching the input, got " +
                                    kernels.shape_string());
    }
    const int k = ks.h;
    const int pad = k / 2;
    Tensor out({xs.n, xs.c, xs.h, xs.w});
    const std::size_t plane = xs.plane();
    const int jobs = xs.n * xs.c;

#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int n = job / xs.c;
        const int c = job % xs.c;
        const double* in = x.data() + plane_index(n, c, xs.c, plane);
        double* o = out.data() + plane_index(n, c, xs.c, plane);
        for (int i = 0; i < k; ++i) {
            const ValidRange rows = valid_outputs(xs.h, xs.h, 1, pad, i);
            for (int j = 0; j < k; ++j) {
                const ValidRange cols = valid_outputs(xs.w, xs.w, 1, pad, j);
                const double w = kernels.at(n, c, i, j);
                for (int h = rows.lo; h < rows.hi; ++h) {
                    const double* in_row = in + static_cast<std::size_t>(h - pad + i) * xs.w;
                    double* out_row = o + static_cast<std::size_t>(h) * xs.w;
                    for (int w_ = cols.lo; w_ < cols.hi; ++w_) {
                        out_row[w_] += w * in_row[w_ - pad + j];
                    }
                }
            }
        }
    }
    return out;
}

void depthwise_conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& grad_out, Tensor* grad_x,
                               Tensor* grad_kernels) {
    const Shape4 xs = shape4(x);
    const Shape4 ks = shape4(kernels);
    const int k = ks.h;
    const int pad = k / 2;
    const std::size_t plane = xs.plane();
    const int jobs = xs.n * xs.c;

#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int n = job / xs.c;
        const int c = job % xs.c;
        const double* in = x.data() + plane_index(n, c, xs.c, plane);
        const double* go = grad_out.data() + plane_index(n, c, xs.c, plane);
        double* gx = grad_x ? grad_x->data() + plane_index(n, c, xs.c, plane) : nullptr;
        for (int i = 0; i < k; ++i) {
            const ValidRange rows = valid_outputs(xs.h, xs.h, 1, pad, i);
            for (int j = 0; j < k; ++j) {
                const ValidRange cols = valid_outputs(xs.w, xs.w, 1, pad, j);
                const double w = kernels.at(n, c, i, j);
                double acc = 0.0;
                for (int h = rows.lo; h < rows.hi; ++h) {
                    const std::size_t in_row = static_cast<std::size_t>(h - pad + i) * xs.w;
                    const double* go_row = go + static_cast<std::size_t>(h) * xs.w;
                    for (int w_ = cols.lo; w_ < cols.hi; ++w_) {
                        acc += in[in_row + w_ - pad + j] * go_row[w_];
                        if (gx) gx[in_row + w_ - pad + j] += w * go_row[w_];
                    }
                }
                if (grad_kernels) grad_kernels->at(n, c, i, j) += acc;
            }
        }
    }
}

namespace {

// Bilinear samples of one image for every (channel, tap, output position),
// laid out as the rows of the deformable-im2col matrix.
void deform_columns(const Tensor& x, const Tensor& offsets, int n, int k, const ConvGeometry& g,
                    std::vector<double>& columns) {
    const Shape4 xs = shape4(x);
    const Shape4 offs = shape4(offsets);
    const int taps = k * k;
    const std::size_t positions = offs.plane();
    columns.assign(static_cast<std::size_t>(xs.c) * taps * positions, 0.0);

#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < xs.c; ++ci) {
        const double* plane = x.data() + plane_index(n, ci, xs.c, xs.plane());
        for (int tap = 0; tap < taps; ++tap) {
            const int i = tap / k;
            const int j = tap % k;
            const double* dy = offsets.data() + plane_index(n, 2 * tap, offs.c, positions);
            const double* dx = offsets.data() + plane_index(n, 2 * tap + 1, offs.c, positions);
            double* row = columns.data() + (static_cast<std::size_t>(ci) * taps + tap) * positions;
            for (int oh = 0; oh < offs.h; ++oh) {
                for (int ow = 0; ow < offs.w; ++ow) {
                    const std::size_t p = static_cast<std::size_t>(oh) * offs.w + ow;
                    row[p] = bilinear_sample(plane, xs.h, xs.w, oh * g.stride - g.padding + i + dy[p],
                                             ow * g.stride - g.padding + j + dx[p]);
                }
            }
        }
    }
}

}  // namespace

Tensor deform_conv2d_forward(const Tensor& x, const Tensor& offsets, const Tensor& weight, const Tensor* bias,
                             const ConvGeometry& g) {
    validate_deform(x, offsets, weight, bias, g);
    const Shape4 xs = shape4(x);
    const Shape4 ws = shape4(weight);
    const Shape4 offs = shape4(offsets);
    const int k = ws.h;
    const std::size_t rows = static_cast<std::size_t>(xs.c) * k * k;
    const std::size_t positions = offs.plane();
    Tensor out({xs.n, ws.n, offs.h, offs.w});
    std::vector<double> columns;

    for (int n = 0; n < xs.n; ++n) {
        deform_columns(x, offsets, n, k, g, columns);
#pragma omp parallel for schedule(static)
        for (int co = 0; co < ws.n; ++co) {
            double* o = out.data() + plane_index(n, co, ws.n, positions);
            std::fill(o, o + positions, bias ? (*bias)[static_cast<std::size_t>(co)] : 0.0);
            const double* wrow = weight.data() + static_cast<std::size_t>(co) * rows;
            for (std::size_t r = 0; r < rows; ++r) {
                const double w = wrow[r];
                const double* col = columns.data() + r * positions;
                for (std::size_t p = 0; p < positions; ++p) {
                    o[p] += w * col[p];
                }
            }
        }
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
    const int taps = k * k;
    const std::size_t rows = static_cast<std::size_t>(xs.c) * taps;
    const std::size_t positions = offs.plane();
    std::vector<double> columns;
    std::vector<double> grad_columns(rows * positions);

    for (int n = 0; n < xs.n; ++n) {
        const double* go = grad_out.data() + plane_index(n, 0, ws.n, positions);

        if (grad_weight) {
            deform_columns(x, offsets, n, k, g, columns);
#pragma omp parallel for schedule(static)
            for (int co = 0; co < ws.n; ++co) {
                const double* go_plane = go + static_cast<std::size_t>(co) * positions;
                double* gw = grad_weight->data() + static_cast<std::size_t>(co) * rows;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* col = columns.data() + r * positions;
                    double acc = 0.0;
                    for (std::size_t p = 0; p < positions; ++p) {
                        acc += go_plane[p] * col[p];
                    }
                    gw[r] += acc;
                }
            }
        }

        if (!grad_x && !grad_offsets) {
            continue;
        }
#pragma omp parallel for schedule(static)
        for (std::size_t r = 0; r < rows; ++r) {
            double* gcol = grad_columns.data() + r * positions;
            std::fill(gcol, gcol + positions, 0.0);
            for (int co = 0; co < ws.n; ++co) {
                const double w = weight[static_cast<std::size_t>(co) * rows + r];
                const double* go_plane = go + static_cast<std::size_t>(co) * positions;
                for (std::size_t p = 0; p < positions; ++p) {
                    gcol[p] += w * go_plane[p];
                }
            }
        }

        if (grad_x) {
#pragma omp parallel for schedule(static)
            for (int ci = 0; ci < xs.c; ++ci) {
                double* gx = grad_x->data() + plane_index(n, ci, xs.c, xs.plane());
                for (int tap = 0; tap < taps; ++tap) {
                    const int i = tap / k;
                    const int j = tap % k;
                    const double* dy = offsets.data() + plane_index(n, 2 * tap, offs.c, positions);
                    const double* dx = offsets.data() + plane_index(n, 2 * tap + 1, offs.c, positions);
                    const double* gcol = grad_columns.data() + (static_cast<std::size_t>(ci) * taps + tap) * positions;
                    for (int oh = 0; oh < offs.h; ++oh) {
                        for (int ow = 0; ow < offs.w; ++ow) {
                            const std::size_t p = static_cast<std::size_t>(oh) * offs.w + ow;
                            bilinear_scatter(gx, xs.h, xs.w, oh * g.stride - g.padding + i + dy[p],
                                             ow * g.stride - g.padding + j + dx[p], gcol[p]);
                        }
                    }
                }
            }
        }

        if (grad_offsets) {
#pragma omp parallel for schedule(static)
            for (int tap = 0; tap < taps; ++tap) {
                const int i = tap / k;
                const int j = tap % k;
                const double* dy = offsets.data() + plane_index(n, 2 * tap, offs.c, positions);
                const double* dx = offsets.data() + plane_index(n, 2 * tap + 1, offs.c, positions);
                double* gdy = grad_offsets->data() + plane_index(n, 2 * tap, offs.c, positions);
                double* gdx = grad_offsets->data() + plane_index(n, 2 * tap + 1, offs.c, positions);
                for (int ci = 0; ci < xs.c; ++ci) {
                    const double* plane = x.data() + plane_index(n, ci, xs.c, xs.plane());
                    const double* gcol = grad_columns.data() + (static_cast<std::size_t>(ci) * taps + tap) * positions;
                    for (int oh = 0; oh < offs.h; ++oh) {
                        for (int ow = 0; ow < offs.w; ++ow) {
                            const std::size_t p = static_cast<std::size_t>(oh) * offs.w + ow;
                            double sy = 0.0, sx = 0.0;
                            bilinear_sample_grad(plane, xs.h, xs.w, oh * g.stride - g.padding + i + dy[p],
                                                 ow * g.stride - g.padding + j + dx[p], sy, sx);
                            gdy[p] += gcol[p] * sy;
                            gdx[p] += gcol[p] * sx;
                        }
                    }
                }
            }
        }
    }

    if (grad_bias) {
        for (int co = 0; co < ws.n; ++co) {
            double acc = 0.0;
            for (int n = 0; n < xs.n; ++n) {
                const double* go = grad_out.data() + plane_index(n, co, ws.n, positions);
                for (std::size_t p = 0; p < positions; ++p) {
                    acc += go[p];
                }
            }
            (*grad_bias)[static_cast<std::size_t>(co)] += acc;
        }
    }
}

}  // namespace evtrack::kernels
