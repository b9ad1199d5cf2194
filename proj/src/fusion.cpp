#include "panoseg/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>

#include "panoseg/numerics/ops.hpp"

namespace panoseg::fusion {

using nn::Tensor;

namespace {
std::atomic<bool> g_mcbam_fault{false};
}

void set_mcbam_backward_fault(bool enabled) { g_mcbam_fault = enabled; }

void MCBAMConfig::validate() const {
    if (window_h == 0 || window_w == 0 || stride_h == 0 || stride_w == 0) {
        throw std::invalid_argument("mcbam: window and stride must be positive");
    }
    if (stride_h > window_h || stride_w > window_w) {
        throw std::invalid_argument("mcbam: stride larger than window leaves pixels uncovered");
    }
    if (spatial_kernel % 2 == 0 || spatial_kernel > std::min(window_h, window_w)) {
        throw std::invalid_argument("mcbam: spatial kernel must be odd and fit inside the window");
    }
    if (reduction == 0) throw std::invalid_argument("mcbam: reduction must be positive");
}

std::size_t hidden_channels(std::size_t channels, std::size_t reduction) {
    return std::max<std::size_t>(1, channels / reduction);
}

CBAMParams CBAMParams::init(std::size_t channels, std::size_t reduction, std::size_t spatial_kernel, nn::Rng& rng) {
    const std::size_t hidden = hidden_channels(channels, reduction);
    CBAMParams p;
    p.mlp.w1 = nn::init_weight({hidden, channels}, channels, rng);
    p.mlp.b1 = nn::init_zeros({hidden});
    p.mlp.w2 = nn::init_weight({channels, hidden}, hidden, rng);
    p.mlp.b2 = nn::init_zeros({channels});
    p.spatial.kernel = nn::init_weight({1, 2, spatial_kernel, spatial_kernel}, 2 * spatial_kernel * spatial_kernel, rng);
    p.spatial.bias = nn::init_zeros({1});
    return p;
}

void CBAMParams::collect(const std::string& prefix, nn::NamedParams& out) const {
    out.emplace_back(prefix + "mlp_w1", mlp.w1);
    out.emplace_back(prefix + "mlp_b1", mlp.b1);
    out.emplace_back(prefix + "mlp_w2", mlp.w2);
    out.emplace_back(prefix + "mlp_b2", mlp.b2);
    out.emplace_back(prefix + "spatial_k", spatial.kernel);
    out.emplace_back(prefix + "spatial_b", spatial.bias);
}

namespace {

Tensor apply_mlp(const Tensor& pooled, const ChannelMLP& mlp) {
    return nn::linear(nn::relu(nn::linear(pooled, mlp.w1, mlp.b1)), mlp.w2, mlp.b2);
}

// x[b,c,h,w] -> x scaled by a[b,c] per channel
Tensor scale_channels(const Tensor& x, const Tensor& a) {
    return x * nn::reshape(a, {a.dim(0), a.dim(1), 1, 1});
}

}  // namespace

Tensor cbam_channel_attention(const Tensor& x, const ChannelMLP& mlp) {
    if (x.rank() != 4) throw nn::ShapeError("channel attention expects [b,c,h,w]");
    const Tensor avg = nn::reduce(nn::ReduceOp::mean, x, {2, 3});
    const Tensor mx = nn::reduce(nn::ReduceOp::max, x, {2, 3});
    return nn::sigmoid(apply_mlp(avg, mlp) + apply_mlp(mx, mlp));
}

Tensor spatial_attention_logits(const Tensor& x, const SpatialConv& conv) {
    const Tensor avg = nn::reduce(nn::ReduceOp::mean, x, {1}, true);
    const Tensor mx = nn::reduce(nn::ReduceOp::max, x, {1}, true);
    const std::size_t k = conv.kernel.dim(2);
    return nn::conv2d(nn::concat({avg, mx}, 1), conv.kernel, conv.bias, nn::Conv2dOptions::same(k, k));
}

Tensor cbam_spatial_attention(const Tensor& x, const SpatialConv& conv) {
    return nn::sigmoid(spatial_attention_logits(x, conv));
}

Tensor cbam(const Tensor& x, const CBAMParams& params) {
    const Tensor refined = scale_channels(x, cbam_channel_attention(x, params.mlp));
    return refined * cbam_spatial_attention(refined, params.spatial);
}

std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window, std::size_t stride) {
    if (window > extent) throw std::invalid_argument("mcbam: window larger than input");
    std::vector<std::size_t> origins;
    std::size_t o = 0;
    for (; o + window <= extent; o += stride) origins.push_back(o);
    if (origins.back() + window < extent) origins.push_back(extent - window);
    return origins;
}

Tensor mcbam(const Tensor& x, const MCBAMConfig& cfg, const CBAMParams& params) {
    cfg.validate();
    if (x.rank() != 4) throw nn::ShapeError("mcbam expects [b,c,h,w]");
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto rows = window_origins(h, cfg.window_h, cfg.stride_h);
    const auto cols = window_origins(w, cfg.window_w, cfg.stride_w);
    const std::size_t wh = cfg.window_h, ww = cfg.window_w;

    auto crop = [&](const Tensor& t, std::size_t oy, std::size_t ox) {
        return nn::slice(nn::slice(t, 2, oy, wh), 3, ox, ww);
    };
    auto place = [&](const Tensor& t, std::size_t oy, std::size_t ox) {
        return nn::pad(nn::pad(t, 2, oy, h - oy - wh), 3, ox, w - ox - ww);
    };

    // Channel stage: per-pixel max over the attention vectors of covering
    // windows. Outside a window its canvas is 0, below any sigmoid output.
    const Tensor window_ones = Tensor::full({b, c, wh, ww}, 1.0);
    Tensor channel_scale;
    for (auto oy : rows) {
        for (auto ox : cols) {
            const Tensor a = cbam_channel_attention(crop(x, oy, ox), params.mlp);
            const Tensor canvas = place(scale_channels(window_ones, a), oy, ox);
            channel_scale = channel_scale.defined() ? nn::maximum(channel_scale, canvas) : canvas;
        }
    }
    const Tensor refined = x * channel_scale;

    // Spatial stage: sum of per-window logits, then one sigmoid.
    Tensor logits;
    for (auto oy : rows) {
        for (auto ox : cols) {
            const Tensor canvas = place(spatial_attention_logits(crop(refined, oy, ox), params.spatial), oy, ox);
            logits = logits.defined() ? logits + canvas : canvas;
        }
    }
    Tensor out = refined * nn::sigmoid(logits);
    if (g_mcbam_fault) out = nn::detail::flip_gradient(out);
    return out;
}

std::string to_string(AttentionMode m) {
    switch (m) {
        case AttentionMode::none: return "none";
        case AttentionMode::channel: return "channel";
        case AttentionMode::cbam: return "cbam";
        case AttentionMode::mcbam: return "mcbam";
    }
    return "?";
}

AttentionMode attention_mode_from_string(const std::string& s) {
    if (s == "none") return AttentionMode::none;
    if (s == "channel") return AttentionMode::channel;
    if (s == "cbam") return AttentionMode::cbam;
    if (s == "mcbam") return AttentionMode::mcbam;
    throw std::invalid_argument("unknown attention mode '" + s + "'");
}

FusionBlockParams FusionBlockParams::init(std::size_t in_channels, std::size_t out_channels, const MCBAMConfig& cfg,
                                          nn::Rng& rng) {
    FusionBlockParams p;
    p.attention = CBAMParams::init(in_channels, cfg.reduction, cfg.spatial_kernel, rng);
    p.conv_w = nn::init_weight({out_channels, in_channels, 3, 3}, 9 * in_channels, rng);
    p.conv_b = nn::init_zeros({out_channels});
    return p;
}

void FusionBlockParams::collect(const std::string& prefix, nn::NamedParams& out) const {
    attention.collect(prefix + "att.", out);
    out.emplace_back(prefix + "conv_w", conv_w);
    out.emplace_back(prefix + "conv_b", conv_b);
}

Tensor fusion_block(const Tensor& x, AttentionMode mode, const MCBAMConfig& cfg, const FusionBlockParams& params) {
    Tensor y;
    switch (mode) {
        case AttentionMode::none: y = x; break;
        case AttentionMode::channel: y = x + scale_channels(x, cbam_channel_attention(x, params.attention.mlp)); break;
        case AttentionMode::cbam: y = x + cbam(x, params.attention); break;
        case AttentionMode::mcbam: y = x + mcbam(x, cfg, params.attention); break;
    }
    const Tensor z = nn::relu(nn::conv2d(y, params.conv_w, params.conv_b, nn::Conv2dOptions::same(3, 3)));
    return nn::interpolate_bilinear(z, z.dim(2) * params.upscale, z.dim(3) * params.upscale);
}

}  // namespace panoseg::fusion
