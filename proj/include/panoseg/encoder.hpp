#pragma once

// Input packing, horizontal positional encoding, and a small vision
// transformer with windowed attention, periodic global-attention blocks and a
// branch output after every global block.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "panoseg/numerics/params.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::encoder {

struct EncoderConfig {
    std::size_t image_h = 64;
    std::size_t image_w = 128;
    std::size_t patch = 16;
    std::size_t depth = 4;
    std::vector<std::size_t> global_blocks{2, 4};  // 1-based, sorted, last == depth
    std::size_t embed_dim = 32;
    std::size_t heads = 4;
    std::size_t window = 4;
    std::size_t mlp_ratio = 4;

    std::size_t grid_h() const { return image_h / patch; }
    std::size_t grid_w() const { return image_w / patch; }
    bool is_global(std::size_t block) const;
    void validate() const;  // throws std::invalid_argument
};

enum class Modality { rgb, depth, normals };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);  // "rgb" | "d" | "n" (also "depth", "normals")

// Encoder-ready 3xHxW images in [0,1], keyed by modality.
struct ModalityBundle {
    std::map<Modality, nn::Tensor> images;

    std::vector<Modality> active() const;  // canonical order: rgb, depth, normals
    void validate() const;
    nn::Tensor stacked() const;  // [n_modalities, 3, h, w]
};

// depth[h,w] in meters -> [3,h,w] pseudo-disparity 1 - min(d, d_t) / d_t.
nn::Tensor depth_to_pseudo_disparity(const nn::Tensor& depth_m, double d_t);

// 99.5th percentile (linear interpolation) rounded to the nearest 0.1 m, ties up.
double compute_d_t(std::span<const double> depths);

// Normals in [-1,1] -> [0,1].
nn::Tensor normals_to_unit_range(const nn::Tensor& normals);

ModalityBundle pack_modalities(const nn::Tensor& rgb, const nn::Tensor& depth_m, const nn::Tensor& normals,
                               std::span<const Modality> modalities, double d_t);

struct HPETable {
    nn::Tensor pe;          // [C, W]
    nn::Tensor pe_shifted;  // pe rolled by W/2 along the width
};

HPETable horizontal_positional_encoding(std::size_t width, std::size_t channels);

struct AttentionParams {
    nn::Tensor qkv_w, qkv_b, proj_w, proj_b;
};

struct BlockParams {
    nn::Tensor norm1_g, norm1_b;
    AttentionParams attn;
    nn::Tensor norm2_g, norm2_b;
    nn::Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

struct EncoderParams {
    nn::Tensor patch_w, patch_b;  // [C, 3*p*p], [C]
    nn::Tensor pos_embed;         // [grid_h, grid_w, C]
    std::vector<BlockParams> blocks;
    nn::Tensor neck1_w, neck1_b;  // 1x1 conv
    nn::Tensor neck2_w, neck2_b;  // 3x3 conv

    static EncoderParams init(const EncoderConfig& cfg, nn::Rng& rng);
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

// Multi-head self-attention over tokens[B,h,w,C], computed independently in
// non-overlapping window x window tiles. Grids that do not divide are
// zero-padded and cropped back. window == 0 means global attention.
nn::Tensor window_attention(const nn::Tensor& tokens, const AttentionParams& params, std::size_t heads,
                            std::size_t window);

// images[B,3,H,W] -> one [B, C, grid_h, grid_w] feature map per global block;
// the last one additionally passes the convolutional neck.
std::vector<nn::Tensor> encode(const nn::Tensor& images, const EncoderConfig& cfg, const EncoderParams& params);
std::vector<nn::Tensor> encode(const ModalityBundle& bundle, const EncoderConfig& cfg, const EncoderParams& params);

}  // namespace panoseg::encoder
