#pragma once

// All-MLP semantic decoder over concatenated branch features and the
// spherical-attention blend of the two aligned view predictions.

#include <cstddef>
#include <string>
#include <vector>

#include "panoseg/encoder.hpp"
#include "panoseg/numerics/params.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::decoder {

struct DecoderConfig {
    std::size_t embed_dim = 32;
    std::size_t num_classes = 8;
    std::vector<std::size_t> branch_channels;
    std::size_t out_h = 64;
    std::size_t out_w = 128;

    void validate() const;
};

struct DecoderParams {
    std::vector<nn::Tensor> proj_w, proj_b;  // per branch, 1x1 conv C_i -> C_d
    nn::Tensor fuse_w, fuse_b;               // 1x1 conv n*C_d -> C_d
    nn::Tensor cls_w, cls_b;                 // 1x1 conv C_d -> K

    static DecoderParams init(const DecoderConfig& cfg, nn::Rng& rng);
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

// Positional rows [V, C, 1, W] for a batch of views: view 0 gets pe, view 1
// (the shifted view) gets pe_shifted.
nn::Tensor positional_rows(const encoder::HPETable& hpe, std::size_t views);

// branches: [V, C_i, h_i, w_i]. `positional` is [V, sum C_i, 1, w] or
// undefined to skip the positional encoding. Returns logits [V, K, out_h, out_w].
nn::Tensor mlp_decode(const std::vector<nn::Tensor>& branches, const nn::Tensor& positional, const DecoderConfig& cfg,
                      const DecoderParams& params);

struct SphericalAttentionParams {
    nn::Tensor conv1_w, conv1_b;  // [K, 2K, k, k]
    nn::Tensor conv2_w, conv2_b;  // [K, K, k, k]

    static SphericalAttentionParams init(std::size_t num_classes, std::size_t kernel, nn::Rng& rng);
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

// alpha = sigmoid(conv_sph(relu(conv_sph(concat[x1, x2])))), same shape as x1.
nn::Tensor spherical_attention(const nn::Tensor& x1, const nn::Tensor& x2, const SphericalAttentionParams& params);

// alpha * x1 + (1 - alpha) * x2; alpha must lie in [0,1].
nn::Tensor blend_views(const nn::Tensor& x1, const nn::Tensor& x2, const nn::Tensor& alpha);

}  // namespace panoseg::decoder
