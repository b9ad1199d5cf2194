#include "panoseg/model.hpp"

#include <set>
#include <stdexcept>

#include "panoseg/geometry.hpp"
#include "panoseg/numerics/ops.hpp"

namespace panoseg {

using nlohmann::json;
using nn::Tensor;

void ModelConfig::validate() const {
    encoder.validate();
    if (modalities.empty() || modalities.front() != encoder::Modality::rgb) {
        throw std::invalid_argument("model: modalities must start with rgb");
    }
    for (std::size_t i = 0; i < modalities.size(); ++i)
        for (std::size_t j = i + 1; j < modalities.size(); ++j)
            if (modalities[i] == modalities[j]) throw std::invalid_argument("model: duplicate modality");
    if (attention == fusion::AttentionMode::mcbam) mcbam.validate();
    if (num_classes < 2) throw std::invalid_argument("model: need at least two classes");
    if ((branch_count() * fusion_dim) % 2 != 0) throw std::invalid_argument("model: HPE channel count must be even");
    if (spherical_kernel % 2 == 0) throw std::invalid_argument("model: spherical kernel must be odd");
}

json to_json(const ModelConfig& cfg) {
    json mods = json::array();
    for (auto m : cfg.modalities) mods.push_back(encoder::to_string(m));
    const auto& e = cfg.encoder;
    return json{
        {"encoder",
         {{"image_h", e.image_h},
          {"image_w", e.image_w},
          {"patch", e.patch},
          {"depth", e.depth},
          {"global_blocks", e.global_blocks},
          {"embed_dim", e.embed_dim},
          {"heads", e.heads},
          {"window", e.window},
          {"mlp_ratio", e.mlp_ratio}}},
        {"modalities", mods},
        {"attention", fusion::to_string(cfg.attention)},
        {"mcbam",
         {{"window", {cfg.mcbam.window_h, cfg.mcbam.window_w}},
          {"stride", {cfg.mcbam.stride_h, cfg.mcbam.stride_w}},
          {"reduction", cfg.mcbam.reduction},
          {"spatial_kernel", cfg.mcbam.spatial_kernel}}},
        {"use_branches", cfg.use_branches},
        {"use_hpe", cfg.use_hpe},
        {"dual_view", cfg.dual_view},
        {"fusion_dim", cfg.fusion_dim},
        {"decoder_dim", cfg.decoder_dim},
        {"num_classes", cfg.num_classes},
        {"spherical_kernel", cfg.spherical_kernel},
    };
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.contains(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
    }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
    reject_unknown(j,
                   {"encoder", "modalities", "attention", "mcbam", "use_branches", "use_hpe", "dual_view", "fusion_dim",
                    "decoder_dim", "num_classes", "spherical_kernel"},
                   "model config");
    ModelConfig cfg;
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        reject_unknown(e, {"image_h", "image_w", "patch", "depth", "global_blocks", "embed_dim", "heads", "window", "mlp_ratio"},
                       "encoder config");
        auto& c = cfg.encoder;
        c.image_h = e.value("image_h", c.image_h);
        c.image_w = e.value("image_w", c.image_w);
        c.patch = e.value("patch", c.patch);
        c.depth = e.value("depth", c.depth);
        c.global_blocks = e.value("global_blocks", c.global_blocks);
        c.embed_dim = e.value("embed_dim", c.embed_dim);
        c.heads = e.value("heads", c.heads);
        c.window = e.value("window", c.window);
        c.mlp_ratio = e.value("mlp_ratio", c.mlp_ratio);
    }
    if (j.contains("modalities")) {
        cfg.modalities.clear();
        for (const auto& m : j.at("modalities")) cfg.modalities.push_back(encoder::modality_from_string(m.get<std::string>()));
    }
    if (j.contains("attention")) cfg.attention = fusion::attention_mode_from_string(j.at("attention").get<std::string>());
    if (j.contains("mcbam")) {
        const auto& m = j.at("mcbam");
        reject_unknown(m, {"window", "stride", "reduction", "spatial_kernel"}, "mcbam config");
        if (m.contains("window")) {
            cfg.mcbam.window_h = m.at("window").at(0);
            cfg.mcbam.window_w = m.at("window").at(1);
        }
        if (m.contains("stride")) {
            cfg.mcbam.stride_h = m.at("stride").at(0);
            cfg.mcbam.stride_w = m.at("stride").at(1);
        }
        cfg.mcbam.reduction = m.value("reduction", cfg.mcbam.reduction);
        cfg.mcbam.spatial_kernel = m.value("spatial_kernel", cfg.mcbam.spatial_kernel);
    }
    cfg.use_branches = j.value("use_branches", cfg.use_branches);
    cfg.use_hpe = j.value("use_hpe", cfg.use_hpe);
    cfg.dual_view = j.value("dual_view", cfg.dual_view);
    cfg.fusion_dim = j.value("fusion_dim", cfg.fusion_dim);
    cfg.decoder_dim = j.value("decoder_dim", cfg.decoder_dim);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.spherical_kernel = j.value("spherical_kernel", cfg.spherical_kernel);
    cfg.validate();
    return cfg;
}

SegModel::SegModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    nn::Rng rng(seed);
    encoder_ = encoder::EncoderParams::init(cfg_.encoder, rng);
    const std::size_t branches = cfg_.branch_count();
    const std::size_t in_ch = cfg_.modalities.size() * cfg_.encoder.embed_dim;
    for (std::size_t i = 0; i < branches; ++i) {
        fusion_.push_back(fusion::FusionBlockParams::init(in_ch, cfg_.fusion_dim, cfg_.mcbam, rng));
    }
    decoder_cfg_.embed_dim = cfg_.decoder_dim;
    decoder_cfg_.num_classes = cfg_.num_classes;
    decoder_cfg_.branch_channels.assign(branches, cfg_.fusion_dim);
    decoder_cfg_.out_h = cfg_.encoder.image_h;
    decoder_cfg_.out_w = cfg_.encoder.image_w;
    decoder_ = decoder::DecoderParams::init(decoder_cfg_, rng);
    if (cfg_.dual_view) spherical_ = decoder::SphericalAttentionParams::init(cfg_.num_classes, cfg_.spherical_kernel, rng);
    hpe_ = encoder::horizontal_positional_encoding(2 * cfg_.encoder.grid_w(), branches * cfg_.fusion_dim);
}

ForwardResult SegModel::forward(const Tensor& images, bool single_view) const {
    if (images.rank() != 4 || images.dim(0) != cfg_.modalities.size()) {
        throw nn::ShapeError("model: expected [" + std::to_string(cfg_.modalities.size()) + ",3,H,W] input, got " +
                             nn::to_string(images.shape()));
    }
    const bool dual = cfg_.dual_view && !single_view;
    const std::size_t views = dual ? 2 : 1;
    const std::size_t n_mod = images.dim(0);
    const std::size_t shift = images.dim(3) / 2;

    Tensor batch = images;
    if (dual) batch = nn::concat({images, geometry::make_view_pair(images).shifted}, 0);

    auto branches = encoder::encode(batch, cfg_.encoder, encoder_);
    if (!cfg_.use_branches) branches = {branches.back()};

    std::vector<Tensor> fused_branches;
    for (std::size_t i = 0; i < branches.size(); ++i) {
        const auto& b = branches[i];
        const Tensor grouped = nn::reshape(b, {views, n_mod * b.dim(1), b.dim(2), b.dim(3)});
        fused_branches.push_back(fusion::fusion_block(grouped, cfg_.attention, cfg_.mcbam, fusion_[i]));
    }

    const Tensor positional = cfg_.use_hpe ? decoder::positional_rows(hpe_, views) : Tensor{};
    ForwardResult r;
    r.raw_logits = decoder::mlp_decode(fused_branches, positional, decoder_cfg_, decoder_);
    r.view_original = dual ? nn::slice(r.raw_logits, 0, 0, 1) : r.raw_logits;
    if (!dual) {
        r.fused = r.view_original;
        return r;
    }
    r.view_shifted = geometry::unshift(nn::slice(r.raw_logits, 0, 1, 1), shift);
    r.alpha = decoder::spherical_attention(r.view_original, r.view_shifted, spherical_);
    r.fused = decoder::blend_views(r.view_original, r.view_shifted, r.alpha);
    return r;
}

ForwardResult SegModel::forward(const encoder::ModalityBundle& bundle, bool single_view) const {
    if (bundle.active() != cfg_.modalities) throw std::invalid_argument("model: bundle modalities do not match config");
    return forward(bundle.stacked(), single_view);
}

nn::NamedParams SegModel::parameters() const { return trainable_parameters(false); }

nn::NamedParams SegModel::trainable_parameters(bool freeze_encoder) const {
    nn::NamedParams out;
    if (!freeze_encoder) encoder_.collect("encoder.", out);
    for (std::size_t i = 0; i < fusion_.size(); ++i) fusion_[i].collect("fusion" + std::to_string(i) + ".", out);
    decoder_.collect("decoder.", out);
    if (cfg_.dual_view) spherical_.collect("spherical.", out);
    return out;
}

ForwardResult forward_dual_view(const SegModel& model, const encoder::ModalityBundle& bundle, bool single_view) {
    return model.forward(bundle, single_view);
}

}  // namespace panoseg
