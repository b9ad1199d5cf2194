#include "panoseg/decoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "panoseg/numerics/ops.hpp"

namespace panoseg::decoder {

using nn::Tensor;

void DecoderConfig::validate() const {
    if (num_classes < 2) throw std::invalid_argument("decoder: need at least two classes");
    if (branch_channels.empty()) throw std::invalid_argument("decoder: need at least one branch");
    if (embed_dim == 0) throw std::invalid_argument("decoder: embed_dim must be positive");
}

DecoderParams DecoderParams::init(const DecoderConfig& cfg, nn::Rng& rng) {
    cfg.validate();
    DecoderParams p;
    const std::size_t cd = cfg.embed_dim;
    for (auto c : cfg.branch_channels) {
        p.proj_w.push_back(nn::init_weight({cd, c, 1, 1}, c, rng));
        p.proj_b.push_back(nn::init_zeros({cd}));
    }
    const std::size_t fused = cd * cfg.branch_channels.size();
    p.fuse_w = nn::init_weight({cd, fused, 1, 1}, fused, rng);
    p.fuse_b = nn::init_zeros({cd});
    p.cls_w = nn::init_weight({cfg.num_classes, cd, 1, 1}, cd, rng);
    p.cls_b = nn::init_zeros({cfg.num_classes});
    return p;
}

void DecoderParams::collect(const std::string& prefix, nn::NamedParams& out) const {
    for (std::size_t i = 0; i < proj_w.size(); ++i) {
        out.emplace_back(prefix + "proj" + std::to_string(i) + "_w", proj_w[i]);
        out.emplace_back(prefix + "proj" + std::to_string(i) + "_b", proj_b[i]);
    }
    out.emplace_back(prefix + "fuse_w", fuse_w);
    out.emplace_back(prefix + "fuse_b", fuse_b);
    out.emplace_back(prefix + "cls_w", cls_w);
    out.emplace_back(prefix + "cls_b", cls_b);
}

Tensor positional_rows(const encoder::HPETable& hpe, std::size_t views) {
    const std::size_t c = hpe.pe.dim(0), w = hpe.pe.dim(1);
    const Tensor pe = nn::reshape(hpe.pe, {1, c, 1, w});
    if (views == 1) return pe;
    if (views != 2) throw std::invalid_argument("positional_rows: expects one or two views");
    return nn::concat({pe, nn::reshape(hpe.pe_shifted, {1, c, 1, w})}, 0);
}

Tensor mlp_decode(const std::vector<Tensor>& branches, const Tensor& positional, const DecoderConfig& cfg,
                  const DecoderParams& params) {
    cfg.validate();
    if (branches.size() != cfg.branch_channels.size() || params.proj_w.size() != branches.size()) {
        throw std::invalid_argument("mlp_decode: branch count mismatch");
    }
    std::size_t out_h = 0, out_w = 0;
    for (const auto& b : branches) {
        out_h = std::max(out_h, b.dim(2));
        out_w = std::max(out_w, b.dim(3));
    }

    std::vector<Tensor> feats = branches;
    if (positional.defined()) {
        // HPE goes onto the channel concatenation; branches share dims here.
        for (const auto& b : branches) {
            if (b.dim(3) != positional.dim(3)) throw nn::ShapeError("mlp_decode: HPE width does not match branch width");
        }
        Tensor cat = nn::concat(std::span<const Tensor>(branches), 1) + positional;
        std::size_t offset = 0;
        for (std::size_t i = 0; i < branches.size(); ++i) {
            feats[i] = nn::slice(cat, 1, offset, branches[i].dim(1));
            offset += branches[i].dim(1);
        }
    }

    std::vector<Tensor> projected;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        Tensor p = nn::conv2d(feats[i], params.proj_w[i], params.proj_b[i], {});
        if (p.dim(2) != out_h || p.dim(3) != out_w) p = nn::interpolate_bilinear(p, out_h, out_w);
        projected.push_back(std::move(p));
    }
    Tensor fused = nn::relu(nn::conv2d(nn::concat(std::span<const Tensor>(projected), 1), params.fuse_w, params.fuse_b, {}));
    Tensor logits = nn::conv2d(fused, params.cls_w, params.cls_b, {});
    return nn::interpolate_bilinear(logits, cfg.out_h, cfg.out_w);
}

SphericalAttentionParams SphericalAttentionParams::init(std::size_t num_classes, std::size_t kernel, nn::Rng& rng) {
    SphericalAttentionParams p;
    const std::size_t k = num_classes;
    p.conv1_w = nn::init_weight({k, 2 * k, kernel, kernel}, 2 * k * kernel * kernel, rng);
    p.conv1_b = nn::init_zeros({k});
    p.conv2_w = nn::init_weight({k, k, kernel, kernel}, k * kernel * kernel, rng);
    p.conv2_b = nn::init_zeros({k});
    return p;
}

void SphericalAttentionParams::collect(const std::string& prefix, nn::NamedParams& out) const {
    out.emplace_back(prefix + "conv1_w", conv1_w);
    out.emplace_back(prefix + "conv1_b", conv1_b);
    out.emplace_back(prefix + "conv2_w", conv2_w);
    out.emplace_back(prefix + "conv2_b", conv2_b);
}

Tensor spherical_attention(const Tensor& x1, const Tensor& x2, const SphericalAttentionParams& params) {
    if (x1.shape() != x2.shape()) throw nn::ShapeError("spherical_attention: view shapes differ");
    const std::size_t k1 = params.conv1_w.dim(2), k2 = params.conv2_w.dim(2);
    const auto opt1 = nn::Conv2dOptions::same(k1, k1, nn::PaddingMode::spherical);
    const auto opt2 = nn::Conv2dOptions::same(k2, k2, nn::PaddingMode::spherical);
    Tensor h = nn::relu(nn::conv2d(nn::concat({x1, x2}, 1), params.conv1_w, params.conv1_b, opt1));
    return nn::sigmoid(nn::conv2d(h, params.conv2_w, params.conv2_b, opt2));
}

Tensor blend_views(const Tensor& x1, const Tensor& x2, const Tensor& alpha) {
    if (x1.shape() != x2.shape() || alpha.shape() != x1.shape()) throw nn::ShapeError("blend_views: shape mismatch");
    for (double a : alpha.data()) {
        if (a < 0.0 || a > 1.0) throw std::invalid_argument("blend_views: alpha outside [0,1]");
    }
    return alpha * x1 + (1.0 - alpha) * x2;
}

}  // namespace panoseg::decoder
