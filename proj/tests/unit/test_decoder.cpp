#include <gtest/gtest.h>

#include "panoseg/decoder.hpp"
#include "panoseg/geometry.hpp"
#include "panoseg/model.hpp"
#include "panoseg/numerics/grad_check.hpp"
#include "panoseg/numerics/ops.hpp"

namespace nn = panoseg::nn;
namespace dec = panoseg::decoder;
using nn::Tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

dec::DecoderConfig tiny_decoder() {
    dec::DecoderConfig cfg;
    cfg.embed_dim = 4;
    cfg.num_classes = 2;
    cfg.branch_channels = {3, 3};
    cfg.out_h = 8;
    cfg.out_w = 16;
    return cfg;
}

panoseg::ModelConfig tiny_model() {
    panoseg::ModelConfig cfg;
    cfg.encoder.image_h = 16;
    cfg.encoder.image_w = 32;
    cfg.encoder.patch = 8;
    cfg.encoder.depth = 2;
    cfg.encoder.global_blocks = {1, 2};
    cfg.encoder.embed_dim = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.window = 2;
    cfg.encoder.mlp_ratio = 2;
    cfg.mcbam = {2, 2, 1, 1, 4, 1};
    cfg.fusion_dim = 4;
    cfg.decoder_dim = 4;
    cfg.num_classes = 3;
    cfg.spherical_kernel = 3;
    return cfg;
}

}  // namespace

TEST(MlpDecode, ZeroClassifierGivesUniformSoftmax) {
    nn::Rng rng(1);
    const auto cfg = tiny_decoder();
    auto p = dec::DecoderParams::init(cfg, rng);
    for (auto* t : {&p.cls_w, &p.cls_b})
        for (auto& v : t->data_mut()) v = 0.0;
    const auto hpe = panoseg::encoder::horizontal_positional_encoding(4, 6);
    const Tensor logits = dec::mlp_decode({Tensor::uniform({1, 3, 2, 4}, rng, -1, 1), Tensor::uniform({1, 3, 2, 4}, rng, -1, 1)},
                                          dec::positional_rows(hpe, 1), cfg, p);
    EXPECT_EQ(logits.shape(), (nn::Shape{1, 2, 8, 16}));
    for (double v : values(nn::softmax(logits, 1))) EXPECT_EQ(v, 0.5);
}

TEST(MlpDecode, RejectsPositionalWidthMismatch) {
    nn::Rng rng(2);
    const auto cfg = tiny_decoder();
    const auto p = dec::DecoderParams::init(cfg, rng);
    const auto hpe = panoseg::encoder::horizontal_positional_encoding(6, 6);
    EXPECT_THROW(dec::mlp_decode({Tensor::zeros({1, 3, 2, 4}), Tensor::zeros({1, 3, 2, 4})}, dec::positional_rows(hpe, 1), cfg, p),
                 nn::ShapeError);
}

TEST(PositionalRows, ShiftedViewGetsRolledTable) {
    const auto hpe = panoseg::encoder::horizontal_positional_encoding(8, 4);
    const Tensor rows = dec::positional_rows(hpe, 2);
    EXPECT_EQ(rows.shape(), (nn::Shape{2, 4, 1, 8}));
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t j = 0; j < 8; ++j) {
            EXPECT_EQ(rows.at({0, c, 0, j}), hpe.pe.at({c, j}));
            EXPECT_EQ(rows.at({1, c, 0, j}), hpe.pe.at({c, (j + 4) % 8}));
        }
}

TEST(SphericalAttention, ZeroWeightsRangeAndEquivariance) {
    nn::Rng rng(3);
    auto p = dec::SphericalAttentionParams::init(3, 3, rng);
    const Tensor x1 = Tensor::uniform({1, 3, 4, 8}, rng, -3, 3), x2 = Tensor::uniform({1, 3, 4, 8}, rng, -3, 3);
    for (double v : values(dec::spherical_attention(x1, x2, p))) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    {
        nn::PrecisionScope f64(nn::Precision::f64);
        const Tensor a = dec::spherical_attention(x1, x2, p);
        for (std::ptrdiff_t s : {1, 2, 4, 7}) {
            namespace g = panoseg::geometry;
            EXPECT_EQ(values(dec::spherical_attention(g::roll_horizontal(x1, s), g::roll_horizontal(x2, s), p)),
                      values(g::roll_horizontal(a, s)));
        }
    }
    for (auto* t : {&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b})
        for (auto& v : t->data_mut()) v = 0.0;
    for (double v : values(dec::spherical_attention(x1, x2, p))) EXPECT_EQ(v, 0.5);
    EXPECT_THROW(dec::spherical_attention(x1, Tensor::zeros({1, 3, 4, 6}), p), nn::ShapeError);
}

TEST(BlendViews, EndpointsAndBounds) {
    nn::Rng rng(4);
    const Tensor x1 = Tensor::uniform({1, 2, 3, 4}, rng, -1, 1), x2 = Tensor::uniform({1, 2, 3, 4}, rng, -1, 1);
    EXPECT_EQ(values(dec::blend_views(x1, x2, Tensor::full(x1.shape(), 1.0))), values(x1));
    EXPECT_EQ(values(dec::blend_views(x1, x2, Tensor::zeros(x1.shape()))), values(x2));
    const auto same = values(dec::blend_views(x1, x1, Tensor::uniform(x1.shape(), rng, 0, 1)));
    for (std::size_t i = 0; i < same.size(); ++i) EXPECT_NEAR(same[i], x1.data()[i], 1e-6);
    EXPECT_EQ(dec::blend_views(Tensor::zeros({1}), Tensor::full({1}, 4.0), Tensor::full({1}, 0.5)).item(), 2.0);
    const Tensor alpha = Tensor::uniform(x1.shape(), rng, 0, 1);
    const Tensor y = dec::blend_views(x1, x2, alpha);
    for (std::size_t i = 0; i < y.numel(); ++i) {
        EXPECT_GE(y.data()[i], std::min(x1.data()[i], x2.data()[i]) - 1e-7);
        EXPECT_LE(y.data()[i], std::max(x1.data()[i], x2.data()[i]) + 1e-7);
    }
    EXPECT_THROW(dec::blend_views(x1, x2, Tensor::full(x1.shape(), 1.5)), std::invalid_argument);
}

TEST(Model, ShapesAndSingleViewBypass) {
    const panoseg::SegModel model(tiny_model(), 1);
    nn::Rng rng(5);
    const Tensor img = Tensor::uniform({1, 3, 16, 32}, rng, 0, 1);
    const auto dual = model.forward(img);
    EXPECT_EQ(dual.fused.shape(), (nn::Shape{1, 3, 16, 32}));
    EXPECT_EQ(dual.raw_logits.shape(), (nn::Shape{2, 3, 16, 32}));
    EXPECT_TRUE(dual.alpha.defined());
    const auto single = model.forward(img, true);
    EXPECT_FALSE(single.view_shifted.defined());
    EXPECT_EQ(values(single.fused), values(single.view_original));
    EXPECT_EQ(values(single.view_original), values(dual.view_original));
}

TEST(Model, ConstantImageGivesIdenticalViewLogits) {
    auto cfg = tiny_model();
    cfg.use_hpe = false;
    panoseg::SegModel model(cfg, 2);
    // The learned absolute position embedding is the only non-constant input.
    for (auto& v : model.encoder_params().pos_embed.data_mut()) v = 0.0;
    const auto out = model.forward(Tensor::full({1, 3, 16, 32}, 0.4));
    const auto raw = values(out.raw_logits);
    const std::size_t half = raw.size() / 2;
    for (std::size_t i = 0; i < half; ++i) EXPECT_EQ(raw[i], raw[half + i]);
    const auto blended = values(dec::blend_views(out.view_original, out.view_shifted, out.alpha));
    EXPECT_EQ(values(out.fused), blended);
}

TEST(Model, HalfTurnEquivarianceWithoutPositionalEncoding) {
    // Exact only when every zero-padded or windowed stage sees a roll-aligned
    // input, which the half-turn guarantees for the dual-view pair as a whole.
    auto cfg = tiny_model();
    cfg.use_hpe = false;
    const panoseg::SegModel model(cfg, 3);
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(6);
    const Tensor img = Tensor::uniform({1, 3, 16, 32}, rng, 0, 1);
    const auto a = model.forward(img);
    const auto b = model.forward(panoseg::geometry::roll_horizontal(img, 16));
    // The rolled input's two views are the original views swapped.
    EXPECT_EQ(values(b.view_original), values(panoseg::geometry::roll_horizontal(a.view_shifted, 16)));
    EXPECT_EQ(values(b.view_shifted), values(panoseg::geometry::roll_horizontal(a.view_original, 16)));
}

TEST(Model, ParameterCensusAndConfigJson) {
    const panoseg::SegModel model(tiny_model(), 4);
    const auto all = nn::parameter_count(model.parameters());
    const auto trainable = nn::parameter_count(model.trainable_parameters(true));
    EXPECT_LT(trainable, all);
    auto single_cfg = tiny_model();
    single_cfg.dual_view = false;
    EXPECT_LT(nn::parameter_count(panoseg::SegModel(single_cfg, 4).parameters()), all);
    const auto round = panoseg::model_config_from_json(panoseg::to_json(tiny_model()));
    EXPECT_EQ(panoseg::to_json(round), panoseg::to_json(tiny_model()));
    auto j = panoseg::to_json(tiny_model());
    j["bogus"] = 1;
    EXPECT_THROW(panoseg::model_config_from_json(j), std::invalid_argument);
}

TEST(Model, FullGradCheck) {
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        nn::PrecisionScope f64(nn::Precision::f64);
        const panoseg::SegModel model(tiny_model(), seed);
        nn::Rng rng(seed);
        for (auto& [name, t] : model.parameters()) {
            if (!name.ends_with("_b") && !name.ends_with("mlp_b1") && !name.ends_with("_b2")) continue;
            const auto v = Tensor::uniform(t.shape(), rng, name.ends_with("mlp_b1") ? 0.1 : -0.2, name.ends_with("mlp_b1") ? 0.4 : 0.2);
            std::copy(v.data().begin(), v.data().end(), t.data_mut().begin());
        }
        std::vector<Tensor> in{Tensor::uniform({1, 3, 16, 32}, rng, 0, 1)};
        for (auto& [n, t] : model.parameters()) in.push_back(t);
        nn::GradCheckOptions o;
        o.max_coords_per_input = 3;
        o.seed = seed;
        EXPECT_LT(nn::grad_check([&](const std::vector<Tensor>& x) { return model.forward(x[0]).fused; }, in, o), 1e-4);
    }
}
