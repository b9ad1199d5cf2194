#include "panoseg/reference/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace panoseg::reference {

using nn::Tensor;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// y = W x + b for W[out,in].
std::vector<double> dense(const Tensor& w, const Tensor& b, const std::vector<double>& x) {
    const std::size_t out = w.dim(0), in = w.dim(1);
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
        double acc = b.data()[o];
        for (std::size_t i = 0; i < in; ++i) acc += w.data()[o * in + i] * x[i];
        y[o] = acc;
    }
    return y;
}

std::vector<double> mlp(const fusion::ChannelMLP& m, const std::vector<double>& x) {
    auto hidden = dense(m.w1, m.b1, x);
    for (auto& v : hidden) v = std::max(0.0, v);
    return dense(m.w2, m.b2, hidden);
}

// Plain 4-D array view used by the attention oracles.
struct Map4 {
    std::size_t b, c, h, w;
    std::vector<double> v;
    double& at(std::size_t n, std::size_t k, std::size_t y, std::size_t x) { return v[((n * c + k) * h + y) * w + x]; }
    double at(std::size_t n, std::size_t k, std::size_t y, std::size_t x) const { return v[((n * c + k) * h + y) * w + x]; }
};

Map4 to_map(const Tensor& x) {
    if (x.rank() != 4) throw nn::ShapeError("oracle expects [b,c,h,w]");
    return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), {x.data().begin(), x.data().end()}};
}

// Channel attention of sample n restricted to rows [y0,y0+wh), cols [x0,x0+ww).
std::vector<double> window_channel(const Map4& m, std::size_t n, std::size_t y0, std::size_t x0, std::size_t wh,
                                   std::size_t ww, const fusion::ChannelMLP& net) {
    std::vector<double> avg(m.c, 0.0), mx(m.c, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < m.c; ++k) {
        for (std::size_t y = y0; y < y0 + wh; ++y)
            for (std::size_t x = x0; x < x0 + ww; ++x) {
                avg[k] += m.at(n, k, y, x);
                mx[k] = std::max(mx[k], m.at(n, k, y, x));
            }
        avg[k] /= static_cast<double>(wh * ww);
    }
    const auto a = mlp(net, avg), b = mlp(net, mx);
    std::vector<double> out(m.c);
    for (std::size_t k = 0; k < m.c; ++k) out[k] = sigmoid(a[k] + b[k]);
    return out;
}

// Pre-sigmoid spatial logit at (y,x), computed only from pixels inside the
// window, zero outside it.
double window_spatial_logit(const Map4& m, std::size_t n, std::size_t y0, std::size_t x0, std::size_t wh,
                            std::size_t ww, std::size_t y, std::size_t x, const fusion::SpatialConv& conv) {
    const std::size_t k = conv.kernel.dim(2);
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    double acc = conv.bias.data()[0];
    for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
            const auto sy = static_cast<std::ptrdiff_t>(y) + static_cast<std::ptrdiff_t>(ky) - r;
            const auto sx = static_cast<std::ptrdiff_t>(x) + static_cast<std::ptrdiff_t>(kx) - r;
            if (sy < static_cast<std::ptrdiff_t>(y0) || sy >= static_cast<std::ptrdiff_t>(y0 + wh) ||
                sx < static_cast<std::ptrdiff_t>(x0) || sx >= static_cast<std::ptrdiff_t>(x0 + ww)) {
                continue;
            }
            double mean = 0.0, mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < m.c; ++c) {
                const double v = m.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                mean += v;
                mx = std::max(mx, v);
            }
            mean /= static_cast<double>(m.c);
            acc += conv.kernel.data()[ky * k + kx] * mean + conv.kernel.data()[k * k + ky * k + kx] * mx;
        }
    return acc;
}

// Origins o with o + window <= extent on the stride lattice, plus the
// border-flush origin; deduplicated.
std::vector<std::size_t> origins(std::size_t extent, std::size_t window, std::size_t stride) {
    if (window > extent) throw std::invalid_argument("oracle: window larger than input");
    std::vector<std::size_t> o;
    for (std::size_t s = 0; s + window <= extent; ++s) {
        if (s % stride == 0) o.push_back(s);
    }
    if (std::find(o.begin(), o.end(), extent - window) == o.end()) o.push_back(extent - window);
    return o;
}

}  // namespace

std::vector<double> conv2d_padded_oracle(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride,
                                         nn::PaddingMode mode, std::size_t pad_h, std::size_t pad_w) {
    const std::size_t b = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const std::size_t hp = h + 2 * pad_h, wp = w + 2 * pad_w;
    std::vector<double> padded(b * cin * hp * wp, 0.0);
    for (std::size_t p = 0; p < b * cin; ++p)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t c = 0; c < wp; ++c) {
                const auto sx = static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(pad_w);
                std::ptrdiff_t src = -1;
                if (mode == nn::PaddingMode::spherical) {
                    src = ((sx % static_cast<std::ptrdiff_t>(w)) + static_cast<std::ptrdiff_t>(w)) % static_cast<std::ptrdiff_t>(w);
                } else if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(w)) {
                    src = sx;
                }
                if (src >= 0) padded[(p * hp + y + pad_h) * wp + c] = x.data()[(p * h + y) * w + static_cast<std::size_t>(src)];
            }
    const std::size_t oh = (hp - kh) / stride + 1, ow = (wp - kw) / stride + 1;
    std::vector<double> out(b * cout * oh * ow);
    for (std::size_t n = 0; n < b; ++n)
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.defined() ? bias.data()[co] : 0.0;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t ky = 0; ky < kh; ++ky)
                            for (std::size_t kx = 0; kx < kw; ++kx)
                                acc += kernel.data()[((co * cin + ci) * kh + ky) * kw + kx] *
                                       padded[((n * cin + ci) * hp + oy * stride + ky) * wp + ox * stride + kx];
                    out[((n * cout + co) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

std::vector<double> bilinear_oracle(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    auto coord = [](std::size_t o, std::size_t in, std::size_t out) {
        double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        s = std::max(s, 0.0);
        return std::min(s, static_cast<double>(in - 1));
    };
    std::vector<double> out(planes * out_h * out_w);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double sy = coord(oy, h, out_h), sx = coord(ox, w, out_w);
                const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
                const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
                const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
                auto v = [&](std::size_t y, std::size_t xx) { return x.data()[(p * h + y) * w + xx]; };
                out[(p * out_h + oy) * out_w + ox] =
                    (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
            }
    return out;
}

std::vector<double> channel_attention_oracle(const Tensor& x, const fusion::ChannelMLP& net) {
    const auto m = to_map(x);
    std::vector<double> out;
    for (std::size_t n = 0; n < m.b; ++n) {
        const auto a = window_channel(m, n, 0, 0, m.h, m.w, net);
        out.insert(out.end(), a.begin(), a.end());
    }
    return out;
}

std::vector<double> cbam_oracle(const Tensor& x, const fusion::CBAMParams& params) {
    fusion::MCBAMConfig whole;
    whole.window_h = whole.stride_h = x.dim(2);
    whole.window_w = whole.stride_w = x.dim(3);
    whole.spatial_kernel = params.spatial.kernel.dim(2);
    return mcbam_oracle(x, whole, params);
}

std::vector<double> mcbam_oracle(const Tensor& x, const fusion::MCBAMConfig& cfg, const fusion::CBAMParams& params) {
    const Map4 in = to_map(x);
    const std::size_t wh = cfg.window_h, ww = cfg.window_w;
    const auto rows = origins(in.h, wh, cfg.stride_h);
    const auto cols = origins(in.w, ww, cfg.stride_w);
    auto covers = [](std::size_t o, std::size_t len, std::size_t p) { return p >= o && p < o + len; };

    // Channel stage, pixel by pixel.
    Map4 refined = in;
    for (std::size_t n = 0; n < in.b; ++n)
        for (std::size_t y = 0; y < in.h; ++y)
            for (std::size_t xx = 0; xx < in.w; ++xx) {
                std::vector<double> scale(in.c, 0.0);
                for (auto oy : rows)
                    for (auto ox : cols) {
                        if (!covers(oy, wh, y) || !covers(ox, ww, xx)) continue;
                        const auto a = window_channel(in, n, oy, ox, wh, ww, params.mlp);
                        for (std::size_t k = 0; k < in.c; ++k) scale[k] = std::max(scale[k], a[k]);
                    }
                for (std::size_t k = 0; k < in.c; ++k) refined.at(n, k, y, xx) = in.at(n, k, y, xx) * scale[k];
            }

    // Spatial stage on the refined map.
    Map4 out = refined;
    for (std::size_t n = 0; n < in.b; ++n)
        for (std::size_t y = 0; y < in.h; ++y)
            for (std::size_t xx = 0; xx < in.w; ++xx) {
                double logit = 0.0;
                for (auto oy : rows)
                    for (auto ox : cols) {
                        if (!covers(oy, wh, y) || !covers(ox, ww, xx)) continue;
                        logit += window_spatial_logit(refined, n, oy, ox, wh, ww, y, xx, params.spatial);
                    }
                const double s = sigmoid(logit);
                for (std::size_t k = 0; k < in.c; ++k) out.at(n, k, y, xx) = refined.at(n, k, y, xx) * s;
            }
    return out.v;
}

LabelMap refine_semantics_oracle(const LabelMap& initial, const std::vector<refinement::InstanceMask>& instances) {
    auto before = [&](std::size_t a, std::size_t b) {
        const auto &ia = instances[a], &ib = instances[b];
        if (ia.quality != ib.quality) return ia.quality > ib.quality;
        if (ia.area != ib.area) return ia.area > ib.area;
        return a < b;
    };
    LabelMap out = initial;
    for (std::size_t p = 0; p < initial.size(); ++p) {
        std::size_t owner = instances.size();
        for (std::size_t i = 0; i < instances.size(); ++i) {
            if (instances[i].mask.values[p] && (owner == instances.size() || before(i, owner))) owner = i;
        }
        if (owner == instances.size()) continue;
        std::map<std::int32_t, std::size_t> votes;
        for (std::size_t q = 0; q < initial.size(); ++q) {
            if (instances[owner].mask.values[q]) ++votes[initial.values[q]];
        }
        std::int32_t best = votes.begin()->first;
        for (const auto& [label, count] : votes) {
            if (count > votes[best]) best = label;
        }
        out.values[p] = best;
    }
    return out;
}

LabelMap fuse_scores_oracle(const std::vector<refinement::ScoredClassMask>& masks, std::size_t height, std::size_t width,
                            const refinement::ScoreFusionOptions& options) {
    LabelMap out(height, width, options.clutter_class);
    for (std::size_t p = 0; p < height * width; ++p) {
        bool any = false;
        double best = 0.0;
        std::int32_t label = options.clutter_class;
        for (const auto& m : masks) {
            if (m.confidence < options.conf_min) continue;
            const double s = m.mask[p] * m.confidence;
            if (!any || s > best || (s == best && m.class_id < label)) {
                best = s;
                label = m.class_id;
                any = true;
            }
        }
        if (any && best >= options.clutter_max) out.values[p] = label;
    }
    return out;
}

Grid<std::int32_t> components_oracle(const LabelMap& labels) {
    std::vector<std::size_t> parent(labels.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        return parent[i] == i ? i : parent[i] = find(parent[i]);
    };
    auto unite = [&](std::size_t a, std::size_t b) { parent[find(a)] = find(b); };
    for (std::size_t y = 0; y < labels.height; ++y)
        for (std::size_t x = 0; x < labels.width; ++x) {
            const std::size_t p = y * labels.width + x;
            if (x + 1 < labels.width && labels.values[p] == labels.values[p + 1]) unite(p, p + 1);
            if (y + 1 < labels.height && labels.values[p] == labels.values[p + labels.width]) unite(p, p + labels.width);
        }
    Grid<std::int32_t> out(labels.height, labels.width);
    std::map<std::size_t, std::int32_t> ids;
    for (std::size_t p = 0; p < labels.size(); ++p) {
        const auto root = find(p);
        auto it = ids.find(root);
        if (it == ids.end()) it = ids.emplace(root, static_cast<std::int32_t>(ids.size() + 1)).first;
        out.values[p] = it->second;
    }
    return out;
}

double percentile_oracle(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of nothing");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace panoseg::reference
