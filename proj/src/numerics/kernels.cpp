#include "panoseg/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace panoseg::nn::kernels {

namespace {

using i64 = std::int64_t;

// Materializes zero/wrap padding for every (batch, channel) plane.
std::vector<double> pad_planes(const ConvGeometry& g, const double* x) {
    const std::size_t planes = g.batch * g.in_channels;
    const std::size_t hp = g.padded_h(), wp = g.padded_w();
    std::vector<double> padded(planes * hp * wp, 0.0);
    const i64 w = static_cast<i64>(g.width);
#pragma omp parallel for schedule(static)
    for (i64 p = 0; p < static_cast<i64>(planes); ++p) {
        const double* src = x + p * g.height * g.width;
        double* dst = padded.data() + p * hp * wp;
        for (std::size_t y = 0; y < g.height; ++y) {
            double* row = dst + (y + g.pad_h) * wp;
            const double* srow = src + y * g.width;
            for (std::size_t c = 0; c < wp; ++c) {
                i64 sx = static_cast<i64>(c) - static_cast<i64>(g.pad_w);
                if (g.padding == PaddingMode::spherical) {
                    sx = ((sx % w) + w) % w;
                    row[c] = srow[sx];
                } else if (sx >= 0 && sx < w) {
                    row[c] = srow[sx];
                }
            }
        }
    }
    return padded;
}

struct LinearSample {
    std::size_t i0, i1;
    double l0, l1;
};

std::vector<LinearSample> sample_positions(std::size_t in, std::size_t out) {
    std::vector<LinearSample> s(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        auto i0 = static_cast<std::size_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        const double l1 = src - static_cast<double>(i0);
        s[o] = {i0, i1, 1.0 - l1, l1};
    }
    return s;
}

}  // namespace

void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
            double* c) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(m); ++i) {
        double* crow = c + i * n;
        std::fill(crow, crow + n, 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_at_b_acc(std::size_t m, std::size_t k, std::size_t n, const double* a,
                     const double* b, double* c) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(m); ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[p * m + i];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_a_bt_acc(std::size_t m, std::size_t k, std::size_t n, const double* a,
                     const double* b, double* c) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(m); ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias,
                    double* out) {
    const auto padded = pad_planes(g, x);
    const std::size_t hp = g.padded_h(), wp = g.padded_w();
    const std::size_t oh = g.out_h(), ow = g.out_w();
    const std::size_t ksz = g.kernel_h * g.kernel_w;
    const i64 jobs = static_cast<i64>(g.batch * g.out_channels);
#pragma omp parallel for schedule(static)
    for (i64 job = 0; job < jobs; ++job) {
        const std::size_t b = job / g.out_channels, co = job % g.out_channels;
        double* dst = out + job * oh * ow;
        std::fill(dst, dst + oh * ow, bias ? bias[co] : 0.0);
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
            const double* plane = padded.data() + (b * g.in_channels + ci) * hp * wp;
            const double* wk = w + (co * g.in_channels + ci) * ksz;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const double wv = wk[ky * g.kernel_w + kx];
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const double* src = plane + (oy * g.stride + ky) * wp + kx;
                        double* drow = dst + oy * ow;
                        if (g.stride == 1) {
                            for (std::size_t ox = 0; ox < ow; ++ox) drow[ox] += wv * src[ox];
                        } else {
                            for (std::size_t ox = 0; ox < ow; ++ox) drow[ox] += wv * src[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, const double* gout, const double* w,
                           double* gx) {
    const std::size_t hp = g.padded_h(), wp = g.padded_w();
    const std::size_t oh = g.out_h(), ow = g.out_w();
    const std::size_t ksz = g.kernel_h * g.kernel_w;
    const i64 jobs = static_cast<i64>(g.batch * g.in_channels);
    const i64 width = static_cast<i64>(g.width);
#pragma omp parallel for schedule(static)
    for (i64 job = 0; job < jobs; ++job) {
        const std::size_t b = job / g.in_channels, ci = job % g.in_channels;
        std::vector<double> gpad(hp * wp, 0.0);
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            const double* go = gout + (b * g.out_channels + co) * oh * ow;
            const double* wk = w + (co * g.in_channels + ci) * ksz;
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                    const double wv = wk[ky * g.kernel_w + kx];
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        double* drow = gpad.data() + (oy * g.stride + ky) * wp + kx;
                        const double* grow = go + oy * ow;
                        if (g.stride == 1) {
                            for (std::size_t ox = 0; ox < ow; ++ox) drow[ox] += wv * grow[ox];
                        } else {
                            for (std::size_t ox = 0; ox < ow; ++ox) drow[ox * g.stride] += wv * grow[ox];
                        }
                    }
                }
            }
        }
        // Fold the padded gradient back onto the input plane.
        double* dst = gx + job * g.height * g.width;
        for (std::size_t y = 0; y < g.height; ++y) {
            const double* row = gpad.data() + (y + g.pad_h) * wp;
            double* drow = dst + y * g.width;
            for (std::size_t c = 0; c < wp; ++c) {
                i64 sx = static_cast<i64>(c) - static_cast<i64>(g.pad_w);
                if (g.padding == PaddingMode::spherical) {
                    drow[((sx % width) + width) % width] += row[c];
                } else if (sx >= 0 && sx < width) {
                    drow[sx] += row[c];
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeometry& g, const double* gout, const double* x,
                            double* gw, double* gb) {
    const auto padded = pad_planes(g, x);
    const std::size_t hp = g.padded_h(), wp = g.padded_w();
    const std::size_t oh = g.out_h(), ow = g.out_w();
    const std::size_t ksz = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
    for (i64 co = 0; co < static_cast<i64>(g.out_channels); ++co) {
        for (std::size_t b = 0; b < g.batch; ++b) {
            const double* go = gout + (b * g.out_channels + co) * oh * ow;
            if (gb) {
                double acc = 0.0;
                for (std::size_t i = 0; i < oh * ow; ++i) acc += go[i];
                gb[co] += acc;
            }
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                const double* plane = padded.data() + (b * g.in_channels + ci) * hp * wp;
                double* wk = gw + (co * g.in_channels + ci) * ksz;
                for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                        double acc = 0.0;
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const double* src = plane + (oy * g.stride + ky) * wp + kx;
                            const double* grow = go + oy * ow;
                            if (g.stride == 1) {
                                for (std::size_t ox = 0; ox < ow; ++ox) acc += grow[ox] * src[ox];
                            } else {
                                for (std::size_t ox = 0; ox < ow; ++ox) acc += grow[ox] * src[ox * g.stride];
                            }
                        }
                        wk[ky * g.kernel_w + kx] += acc;
                    }
                }
            }
        }
    }
}

void bilinear_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h,
                      std::size_t out_w, const double* x, double* out) {
    const auto ys = sample_positions(h, out_h);
    const auto xs = sample_positions(w, out_w);
#pragma omp parallel for schedule(static)
    for (i64 p = 0; p < static_cast<i64>(planes); ++p) {
        const double* src = x + p * h * w;
        double* dst = out + p * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& sy = ys[oy];
            const double* r0 = src + sy.i0 * w;
            const double* r1 = src + sy.i1 * w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto& sx = xs[ox];
                dst[oy * out_w + ox] = sy.l0 * (sx.l0 * r0[sx.i0] + sx.l1 * r0[sx.i1]) +
                                       sy.l1 * (sx.l0 * r1[sx.i0] + sx.l1 * r1[sx.i1]);
            }
        }
    }
}

void bilinear_backward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h,
                       std::size_t out_w, const double* gout, double* gx) {
    const auto ys = sample_positions(h, out_h);
    const auto xs = sample_positions(w, out_w);
#pragma omp parallel for schedule(static)
    for (i64 p = 0; p < static_cast<i64>(planes); ++p) {
        const double* go = gout + p * out_h * out_w;
        double* dst = gx + p * h * w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto& sy = ys[oy];
            double* r0 = dst + sy.i0 * w;
            double* r1 = dst + sy.i1 * w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto& sx = xs[ox];
                const double g = go[oy * out_w + ox];
                r0[sx.i0] += sy.l0 * sx.l0 * g;
                r0[sx.i1] += sy.l0 * sx.l1 * g;
                r1[sx.i0] += sy.l1 * sx.l0 * g;
                r1[sx.i1] += sy.l1 * sx.l1 * g;
            }
        }
    }
}

}  // namespace panoseg::nn::kernels
