#pragma once

// Full segmentation network: shared encoder over modality batches and both
// views, per-branch fusion, MLP decoder, and the spherical-attention blend.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "panoseg/decoder.hpp"
#include "panoseg/encoder.hpp"
#include "panoseg/fusion.hpp"
#include "panoseg/numerics/params.hpp"

namespace panoseg {

struct ModelConfig {
    encoder::EncoderConfig encoder;
    std::vector<encoder::Modality> modalities{encoder::Modality::rgb};
    fusion::AttentionMode attention = fusion::AttentionMode::mcbam;
    // Toy token grid is 4x8, so the default window is scaled down with it.
    fusion::MCBAMConfig mcbam{4, 4, 2, 2, 16, 3};
    bool use_branches = true;  // false: final encoder output only
    bool use_hpe = true;
    bool dual_view = true;
    std::size_t fusion_dim = 32;
    std::size_t decoder_dim = 32;
    std::size_t num_classes = 8;
    std::size_t spherical_kernel = 7;

    std::size_t branch_count() const { return use_branches ? encoder.global_blocks.size() : 1; }
    void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Rejects unknown keys.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ForwardResult {
    nn::Tensor fused;          // [1, K, H, W], original frame
    nn::Tensor view_original;  // x1
    nn::Tensor view_shifted;   // x2, already unshifted; undefined in single-view mode
    nn::Tensor alpha;          // undefined in single-view mode
    nn::Tensor raw_logits;     // [views, K, H, W] straight out of the decoder
};

class SegModel {
   public:
    SegModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    // images: [n_modalities, 3, H, W] in the configured modality order.
    ForwardResult forward(const nn::Tensor& images, bool single_view = false) const;
    ForwardResult forward(const encoder::ModalityBundle& bundle, bool single_view = false) const;

    nn::NamedParams parameters() const;
    nn::NamedParams trainable_parameters(bool freeze_encoder) const;

    encoder::EncoderParams& encoder_params() { return encoder_; }
    std::vector<fusion::FusionBlockParams>& fusion_params() { return fusion_; }
    decoder::DecoderParams& decoder_params() { return decoder_; }
    decoder::SphericalAttentionParams& spherical_params() { return spherical_; }

   private:
    ModelConfig cfg_;
    decoder::DecoderConfig decoder_cfg_;
    encoder::HPETable hpe_;
    encoder::EncoderParams encoder_;
    std::vector<fusion::FusionBlockParams> fusion_;
    decoder::DecoderParams decoder_;
    decoder::SphericalAttentionParams spherical_;
};

// Both views through shared weights, shifted logits realigned, blended.
ForwardResult forward_dual_view(const SegModel& model, const encoder::ModalityBundle& bundle, bool single_view = false);

}  // namespace panoseg
