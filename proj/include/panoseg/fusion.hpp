#pragma once

// Channel/spatial block attention, its sliding-window variant, and the
// per-branch fusion block applied to modality-concatenated encoder features.

#include <cstddef>
#include <string>
#include <vector>

#include "panoseg/numerics/params.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::fusion {

struct MCBAMConfig {
    std::size_t window_h = 8;
    std::size_t window_w = 8;
    std::size_t stride_h = 4;
    std::size_t stride_w = 4;
    std::size_t reduction = 16;
    std::size_t spatial_kernel = 3;

    void validate() const;  // throws std::invalid_argument
};

// Shared MLP C -> hidden -> C used by both pooling paths.
struct ChannelMLP {
    nn::Tensor w1, b1, w2, b2;
};

// Conv over [mean_c, max_c] -> 1 logit map.
struct SpatialConv {
    nn::Tensor kernel;  // [1, 2, k, k]
    nn::Tensor bias;    // [1]
};

struct CBAMParams {
    ChannelMLP mlp;
    SpatialConv spatial;

    static CBAMParams init(std::size_t channels, std::size_t reduction, std::size_t spatial_kernel, nn::Rng& rng);
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

std::size_t hidden_channels(std::size_t channels, std::size_t reduction);

// sigmoid(MLP(avgpool(x)) + MLP(maxpool(x))): x[b,c,h,w] -> [b,c].
nn::Tensor cbam_channel_attention(const nn::Tensor& x, const ChannelMLP& mlp);
// Pre-sigmoid spatial map [b,1,h,w], zero padded, same size.
nn::Tensor spatial_attention_logits(const nn::Tensor& x, const SpatialConv& conv);
nn::Tensor cbam_spatial_attention(const nn::Tensor& x, const SpatialConv& conv);
nn::Tensor cbam(const nn::Tensor& x, const CBAMParams& params);

// Window origins along one axis at `stride` steps; a final window flush with
// the border is appended when the regular grid stops short of it.
std::vector<std::size_t> window_origins(std::size_t extent, std::size_t window, std::size_t stride);

// Sliding-window CBAM. Channel weights of overlapping windows are combined by
// per-channel max; spatial logits are summed before a single sigmoid.
nn::Tensor mcbam(const nn::Tensor& x, const MCBAMConfig& cfg, const CBAMParams& params);

enum class AttentionMode { none, channel, cbam, mcbam };

std::string to_string(AttentionMode m);
AttentionMode attention_mode_from_string(const std::string& s);

struct FusionBlockParams {
    CBAMParams attention;
    nn::Tensor conv_w, conv_b;  // 3x3, in -> out channels
    std::size_t upscale = 2;

    static FusionBlockParams init(std::size_t in_channels, std::size_t out_channels, const MCBAMConfig& cfg,
                                  nn::Rng& rng);
    void collect(const std::string& prefix, nn::NamedParams& out) const;
};

// y = x + attention(x); z = relu(conv3x3(y)); out = bilinear upscale of z.
nn::Tensor fusion_block(const nn::Tensor& x, AttentionMode mode, const MCBAMConfig& cfg,
                        const FusionBlockParams& params);

// Negates the gradient leaving MCBAM; used to check that the verification
// suite catches a broken backward pass.
void set_mcbam_backward_fault(bool enabled);

}  // namespace panoseg::fusion
