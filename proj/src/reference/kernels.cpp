#include "panoseg/reference/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace panoseg::reference::kernels {

namespace {

using i64 = std::int64_t;

// Source column of padded column c, or -1 for a zero sample.
i64 source_col(const ConvGeometry& g, i64 c) {
    const i64 w = static_cast<i64>(g.width);
    const i64 sx = c - static_cast<i64>(g.pad_w);
    if (g.padding == nn::PaddingMode::spherical) return ((sx % w) + w) % w;
    return (sx >= 0 && sx < w) ? sx : -1;
}

i64 source_row(const ConvGeometry& g, i64 r) {
    const i64 sy = r - static_cast<i64>(g.pad_h);
    return (sy >= 0 && sy < static_cast<i64>(g.height)) ? sy : -1;
}

double sample_at(double src, std::size_t in, std::size_t& i0, std::size_t& i1) {
    double s = std::max(0.0, src);
    i0 = std::min(static_cast<std::size_t>(std::floor(s)), in - 1);
    i1 = std::min(i0 + 1, in - 1);
    return s - static_cast<double>(i0);
}

double source_coord(std::size_t o, std::size_t in, std::size_t out) {
    return (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
}

}  // namespace

void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

void matmul_at_b_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] += acc;
        }
}

void matmul_a_bt_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] += acc;
        }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* out) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias ? bias[co] : 0.0;
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                            const i64 sy = source_row(g, static_cast<i64>(oy * g.stride + ky));
                            if (sy < 0) continue;
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const i64 sx = source_col(g, static_cast<i64>(ox * g.stride + kx));
                                if (sx < 0) continue;
                                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                                       x[((b * g.in_channels + ci) * g.height + sy) * g.width + sx];
                            }
                        }
                    out[((b * g.out_channels + co) * oh + oy) * ow + ox] = acc;
                }
}

void conv2d_backward_input(const ConvGeometry& g, const double* gout, const double* w, double* gx) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double go = gout[((b * g.out_channels + co) * oh + oy) * ow + ox];
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                            const i64 sy = source_row(g, static_cast<i64>(oy * g.stride + ky));
                            if (sy < 0) continue;
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const i64 sx = source_col(g, static_cast<i64>(ox * g.stride + kx));
                                if (sx < 0) continue;
                                gx[((b * g.in_channels + ci) * g.height + sy) * g.width + sx] +=
                                    go * w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
                            }
                        }
                }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* gout, const double* x, double* gw, double* gb) {
    const std::size_t oh = g.out_h(), ow = g.out_w();
    for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double go = gout[((b * g.out_channels + co) * oh + oy) * ow + ox];
                    if (gb) gb[co] += go;
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
                        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                            const i64 sy = source_row(g, static_cast<i64>(oy * g.stride + ky));
                            if (sy < 0) continue;
                            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                                const i64 sx = source_col(g, static_cast<i64>(ox * g.stride + kx));
                                if (sx < 0) continue;
                                gw[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] +=
                                    go * x[((b * g.in_channels + ci) * g.height + sy) * g.width + sx];
                            }
                        }
                }
}

void bilinear_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h, std::size_t out_w,
                      const double* x, double* out) {
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                std::size_t y0, y1, x0, x1;
                const double ly = sample_at(source_coord(oy, h, out_h), h, y0, y1);
                const double lx = sample_at(source_coord(ox, w, out_w), w, x0, x1);
                const double* src = x + p * h * w;
                out[(p * out_h + oy) * out_w + ox] = (1 - ly) * (1 - lx) * src[y0 * w + x0] + (1 - ly) * lx * src[y0 * w + x1] +
                                                     ly * (1 - lx) * src[y1 * w + x0] + ly * lx * src[y1 * w + x1];
            }
}

void bilinear_backward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h, std::size_t out_w,
                       const double* gout, double* gx) {
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                std::size_t y0, y1, x0, x1;
                const double ly = sample_at(source_coord(oy, h, out_h), h, y0, y1);
                const double lx = sample_at(source_coord(ox, w, out_w), w, x0, x1);
                const double g = gout[(p * out_h + oy) * out_w + ox];
                double* dst = gx + p * h * w;
                dst[y0 * w + x0] += (1 - ly) * (1 - lx) * g;
                dst[y0 * w + x1] += (1 - ly) * lx * g;
                dst[y1 * w + x0] += ly * (1 - lx) * g;
                dst[y1 * w + x1] += ly * lx * g;
            }
}

}  // namespace panoseg::reference::kernels
