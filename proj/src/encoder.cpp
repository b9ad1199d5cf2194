#include "panoseg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "panoseg/numerics/ops.hpp"

namespace panoseg::encoder {

using nn::Tensor;

bool EncoderConfig::is_global(std::size_t block) const {
    return std::find(global_blocks.begin(), global_blocks.end(), block) != global_blocks.end();
}

void EncoderConfig::validate() const {
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) {
        throw std::invalid_argument("encoder: image dims must be divisible by the patch size");
    }
    if (grid_w() % 2 != 0) throw std::invalid_argument("encoder: token grid width must be even");
    if (depth == 0 || global_blocks.empty()) throw std::invalid_argument("encoder: need at least one global block");
    if (!std::is_sorted(global_blocks.begin(), global_blocks.end()) || global_blocks.front() == 0 ||
        global_blocks.back() != depth) {
        throw std::invalid_argument("encoder: global blocks must be sorted, 1-based, and end at the last block");
    }
    if (heads == 0 || embed_dim % heads != 0) throw std::invalid_argument("encoder: embed_dim must divide by heads");
}

std::string to_string(Modality m) {
    switch (m) {
        case Modality::rgb: return "rgb";
        case Modality::depth: return "d";
        case Modality::normals: return "n";
    }
    return "?";
}

Modality modality_from_string(const std::string& s) {
    if (s == "rgb") return Modality::rgb;
    if (s == "d" || s == "depth") return Modality::depth;
    if (s == "n" || s == "normals") return Modality::normals;
    throw std::invalid_argument("unknown modality '" + s + "'");
}

std::vector<Modality> ModalityBundle::active() const {
    std::vector<Modality> out;
    for (const auto& [m, t] : images) out.push_back(m);
    return out;
}

void ModalityBundle::validate() const {
    if (!images.contains(Modality::rgb)) throw std::invalid_argument("modality bundle: rgb is required");
    const auto& ref = images.at(Modality::rgb);
    for (const auto& [m, t] : images) {
        if (t.rank() != 3 || t.dim(0) != 3 || t.dim(1) != ref.dim(1) || t.dim(2) != ref.dim(2)) {
            throw nn::ShapeError("modality bundle: " + to_string(m) + " has shape " + nn::to_string(t.shape()));
        }
    }
}

Tensor ModalityBundle::stacked() const {
    validate();
    std::vector<Tensor> parts;
    for (const auto& [m, t] : images) parts.push_back(nn::reshape(t, {1, t.dim(0), t.dim(1), t.dim(2)}));
    return nn::concat(std::span<const Tensor>(parts), 0);
}

Tensor depth_to_pseudo_disparity(const Tensor& depth_m, double d_t) {
    if (!(d_t > 0.0)) throw std::invalid_argument("depth threshold must be positive");
    if (depth_m.rank() != 2) throw nn::ShapeError("depth_to_pseudo_disparity: expects [h,w]");
    const std::size_t plane = depth_m.numel();
    const auto d = depth_m.data();
    std::vector<double> out(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        if (d[i] < 0.0) throw std::invalid_argument("depth must be non-negative");
        const double v = 1.0 - std::min(d[i], d_t) / d_t;
        out[i] = out[plane + i] = out[2 * plane + i] = v;
    }
    return Tensor::from_data({3, depth_m.dim(0), depth_m.dim(1)}, std::move(out));
}

double compute_d_t(std::span<const double> depths) {
    if (depths.empty()) throw std::invalid_argument("compute_d_t: no depth values");
    std::vector<double> sorted(depths.begin(), depths.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = 0.995 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    const double p = sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    return std::floor(p * 10.0 + 0.5) / 10.0;
}

Tensor normals_to_unit_range(const Tensor& normals) {
    std::vector<double> out(normals.data().begin(), normals.data().end());
    for (auto& v : out) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
    return Tensor::from_data(normals.shape(), std::move(out));
}

ModalityBundle pack_modalities(const Tensor& rgb, const Tensor& depth_m, const Tensor& normals,
                               std::span<const Modality> modalities, double d_t) {
    ModalityBundle bundle;
    for (auto m : modalities) {
        switch (m) {
            case Modality::rgb: bundle.images[m] = rgb.detach(); break;
            case Modality::depth: bundle.images[m] = depth_to_pseudo_disparity(depth_m, d_t); break;
            case Modality::normals: bundle.images[m] = normals_to_unit_range(normals); break;
        }
    }
    bundle.validate();
    return bundle;
}

HPETable horizontal_positional_encoding(std::size_t width, std::size_t channels) {
    if (channels == 0 || channels % 2 != 0) throw std::invalid_argument("HPE needs an even channel count");
    if (width == 0) throw std::invalid_argument("HPE needs a positive width");
    std::vector<double> pe(channels * width), shifted(channels * width);
    for (std::size_t i = 0; i < channels / 2; ++i) {
        const double denom = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(channels));
        for (std::size_t w = 0; w < width; ++w) {
            const double a = static_cast<double>(w) / denom;
            pe[(2 * i) * width + w] = std::sin(a);
            pe[(2 * i + 1) * width + w] = std::cos(a);
        }
    }
    const std::size_t half = width / 2;
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t w = 0; w < width; ++w) shifted[c * width + w] = pe[c * width + (w + half) % width];
    return {Tensor::from_data({channels, width}, std::move(pe)), Tensor::from_data({channels, width}, std::move(shifted))};
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, nn::Rng& rng) {
    cfg.validate();
    const std::size_t c = cfg.embed_dim, patch_in = 3 * cfg.patch * cfg.patch, hidden = c * cfg.mlp_ratio;
    EncoderParams p;
    p.patch_w = nn::init_weight({c, patch_in}, patch_in, rng);
    p.patch_b = nn::init_zeros({c});
    p.pos_embed = Tensor::randn({cfg.grid_h(), cfg.grid_w(), c}, rng, 0.02, true);
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        BlockParams blk;
        blk.norm1_g = nn::init_ones({c});
        blk.norm1_b = nn::init_zeros({c});
        blk.attn.qkv_w = nn::init_weight({3 * c, c}, c, rng);
        blk.attn.qkv_b = nn::init_zeros({3 * c});
        blk.attn.proj_w = nn::init_weight({c, c}, c, rng);
        blk.attn.proj_b = nn::init_zeros({c});
        blk.norm2_g = nn::init_ones({c});
        blk.norm2_b = nn::init_zeros({c});
        blk.fc1_w = nn::init_weight({hidden, c}, c, rng);
        blk.fc1_b = nn::init_zeros({hidden});
        blk.fc2_w = nn::init_weight({c, hidden}, hidden, rng);
        blk.fc2_b = nn::init_zeros({c});
        p.blocks.push_back(std::move(blk));
    }
    p.neck1_w = nn::init_weight({c, c, 1, 1}, c, rng);
    p.neck1_b = nn::init_zeros({c});
    p.neck2_w = nn::init_weight({c, c, 3, 3}, 9 * c, rng);
    p.neck2_b = nn::init_zeros({c});
    return p;
}

void EncoderParams::collect(const std::string& prefix, nn::NamedParams& out) const {
    out.emplace_back(prefix + "patch_w", patch_w);
    out.emplace_back(prefix + "patch_b", patch_b);
    out.emplace_back(prefix + "pos_embed", pos_embed);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const std::string bp = prefix + "block" + std::to_string(i) + ".";
        out.emplace_back(bp + "norm1_g", b.norm1_g);
        out.emplace_back(bp + "norm1_b", b.norm1_b);
        out.emplace_back(bp + "qkv_w", b.attn.qkv_w);
        out.emplace_back(bp + "qkv_b", b.attn.qkv_b);
        out.emplace_back(bp + "proj_w", b.attn.proj_w);
        out.emplace_back(bp + "proj_b", b.attn.proj_b);
        out.emplace_back(bp + "norm2_g", b.norm2_g);
        out.emplace_back(bp + "norm2_b", b.norm2_b);
        out.emplace_back(bp + "fc1_w", b.fc1_w);
        out.emplace_back(bp + "fc1_b", b.fc1_b);
        out.emplace_back(bp + "fc2_w", b.fc2_w);
        out.emplace_back(bp + "fc2_b", b.fc2_b);
    }
    out.emplace_back(prefix + "neck1_w", neck1_w);
    out.emplace_back(prefix + "neck1_b", neck1_b);
    out.emplace_back(prefix + "neck2_w", neck2_w);
    out.emplace_back(prefix + "neck2_b", neck2_b);
}

namespace {

// seq[N,T,C] -> [N,T,C]
Tensor multi_head_attention(const Tensor& seq, const AttentionParams& p, std::size_t heads) {
    const std::size_t n = seq.dim(0), t = seq.dim(1), c = seq.dim(2), hd = c / heads;
    Tensor qkv = nn::linear(seq, p.qkv_w, p.qkv_b);
    qkv = nn::permute(nn::reshape(qkv, {n, t, 3, heads, hd}), {2, 0, 3, 1, 4});
    auto part = [&](std::size_t i) { return nn::reshape(nn::slice(qkv, 0, i, 1), {n * heads, t, hd}); };
    const Tensor q = part(0), k = part(1), v = part(2);
    const Tensor scores = nn::bmm(q, nn::transpose(k, 1, 2)) * (1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor o = nn::bmm(nn::softmax(scores, -1), v);
    o = nn::reshape(nn::permute(nn::reshape(o, {n, heads, t, hd}), {0, 2, 1, 3}), {n, t, c});
    return nn::linear(o, p.proj_w, p.proj_b);
}

Tensor transformer_block(const Tensor& x, const BlockParams& p, std::size_t heads, std::size_t window) {
    Tensor y = x + window_attention(nn::layer_norm(x, p.norm1_g, p.norm1_b), p.attn, heads, window);
    Tensor h = nn::gelu(nn::linear(nn::layer_norm(y, p.norm2_g, p.norm2_b), p.fc1_w, p.fc1_b));
    return y + nn::linear(h, p.fc2_w, p.fc2_b);
}

}  // namespace

Tensor window_attention(const Tensor& tokens, const AttentionParams& params, std::size_t heads, std::size_t window) {
    if (tokens.rank() != 4) throw nn::ShapeError("window_attention: expects tokens[B,h,w,C]");
    const std::size_t b = tokens.dim(0), h = tokens.dim(1), w = tokens.dim(2), c = tokens.dim(3);
    if (heads == 0 || c % heads != 0) throw nn::ShapeError("window_attention: channels must divide by heads");
    if (window == 0) {
        return nn::reshape(multi_head_attention(nn::reshape(tokens, {b, h * w, c}), params, heads), {b, h, w, c});
    }
    const std::size_t hp = (h + window - 1) / window * window, wp = (w + window - 1) / window * window;
    Tensor x = tokens;
    if (hp != h) x = nn::pad(x, 1, 0, hp - h);
    if (wp != w) x = nn::pad(x, 2, 0, wp - w);
    const std::size_t nh = hp / window, nw = wp / window;
    x = nn::reshape(x, {b, nh, window, nw, window, c});
    x = nn::reshape(nn::permute(x, {0, 1, 3, 2, 4, 5}), {b * nh * nw, window * window, c});
    Tensor y = multi_head_attention(x, params, heads);
    y = nn::reshape(y, {b, nh, nw, window, window, c});
    y = nn::reshape(nn::permute(y, {0, 1, 3, 2, 4, 5}), {b, hp, wp, c});
    if (hp != h) y = nn::slice(y, 1, 0, h);
    if (wp != w) y = nn::slice(y, 2, 0, w);
    return y;
}

std::vector<Tensor> encode(const Tensor& images, const EncoderConfig& cfg, const EncoderParams& params) {
    cfg.validate();
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg.image_h || images.dim(3) != cfg.image_w) {
        throw nn::ShapeError("encode: images " + nn::to_string(images.shape()) + " do not match the encoder config");
    }
    if (params.blocks.size() != cfg.depth) throw std::invalid_argument("encode: parameter depth mismatch");
    const std::size_t b = images.dim(0), p = cfg.patch, gh = cfg.grid_h(), gw = cfg.grid_w();
    Tensor x = nn::reshape(images, {b, 3, gh, p, gw, p});
    x = nn::reshape(nn::permute(x, {0, 2, 4, 1, 3, 5}), {b, gh, gw, 3 * p * p});
    x = nn::linear(x, params.patch_w, params.patch_b) + params.pos_embed;

    std::vector<Tensor> branches;
    for (std::size_t i = 1; i <= cfg.depth; ++i) {
        const bool global = cfg.is_global(i);
        x = transformer_block(x, params.blocks[i - 1], cfg.heads, global ? 0 : cfg.window);
        if (!global) continue;
        Tensor feat = nn::permute(x, {0, 3, 1, 2});
        if (i == cfg.depth) {
            feat = nn::conv2d(feat, params.neck1_w, params.neck1_b, {});
            feat = nn::conv2d(feat, params.neck2_w, params.neck2_b, nn::Conv2dOptions::same(3, 3));
        }
        branches.push_back(std::move(feat));
    }
    return branches;
}

std::vector<Tensor> encode(const ModalityBundle& bundle, const EncoderConfig& cfg, const EncoderParams& params) {
    return encode(bundle.stacked(), cfg, params);
}

}  // namespace panoseg::encoder
