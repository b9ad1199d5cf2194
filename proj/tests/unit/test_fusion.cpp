#include <gtest/gtest.h>

#include "panoseg/fusion.hpp"
#include "panoseg/numerics/grad_check.hpp"
#include "panoseg/numerics/ops.hpp"
#include "panoseg/reference/oracles.hpp"

namespace nn = panoseg::nn;
namespace fu = panoseg::fusion;
using nn::Tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void fill(Tensor& t, double v) {
    for (auto& x : t.data_mut()) x = v;
}

fu::CBAMParams random_params(std::size_t c, std::size_t k, nn::Rng& rng) {
    auto p = fu::CBAMParams::init(c, 2, k, rng);
    for (auto* t : {&p.mlp.b1, &p.mlp.b2, &p.spatial.bias}) {
        const auto v = Tensor::uniform(t->shape(), rng, -0.3, 0.3);
        std::copy(v.data().begin(), v.data().end(), t->data_mut().begin());
    }
    return p;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-9));
    return worst;
}

}  // namespace

TEST(ChannelAttention, ZeroWeightsGiveHalf) {
    nn::Rng rng(1);
    auto p = fu::CBAMParams::init(4, 2, 3, rng);
    for (auto* t : {&p.mlp.w1, &p.mlp.b1, &p.mlp.w2, &p.mlp.b2}) fill(*t, 0.0);
    for (double v : values(fu::cbam_channel_attention(Tensor::uniform({2, 4, 3, 3}, rng, -1, 1), p.mlp))) EXPECT_EQ(v, 0.5);
}

TEST(ChannelAttention, ConstantInputSharesPaths) {
    nn::Rng rng(2);
    const auto p = random_params(3, 3, rng);
    nn::PrecisionScope f64(nn::Precision::f64);
    const Tensor x = Tensor::full({1, 3, 4, 4}, 0.7);
    const Tensor hidden = nn::relu(nn::linear(Tensor::full({1, 3}, 0.7), p.mlp.w1, p.mlp.b1));
    const Tensor once = nn::linear(hidden, p.mlp.w2, p.mlp.b2);
    const Tensor expected = nn::sigmoid(once * 2.0);
    const Tensor got = fu::cbam_channel_attention(x, p.mlp);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got.data()[i], expected.data()[i], 1e-12);
}

TEST(ChannelAttention, MatchesScalarOracle) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(3);
    const auto p = random_params(3, 3, rng);
    const Tensor x = Tensor::uniform({1, 3, 4, 4}, rng, -1, 1);
    EXPECT_LT(max_rel(values(fu::cbam_channel_attention(x, p.mlp)), panoseg::reference::channel_attention_oracle(x, p.mlp)), 1e-12);
}

TEST(SpatialAttention, ZeroKernelAndConstantInput) {
    nn::Rng rng(4);
    auto p = random_params(3, 3, rng);
    fill(p.spatial.kernel, 0.0);
    fill(p.spatial.bias, 0.0);
    const Tensor half = fu::cbam_spatial_attention(Tensor::uniform({1, 3, 5, 5}, rng, -1, 1), p.spatial);
    EXPECT_EQ(half.shape(), (nn::Shape{1, 1, 5, 5}));
    for (double v : half.data()) EXPECT_EQ(v, 0.5);
    const auto q = random_params(3, 1, rng);
    const Tensor flat = fu::cbam_spatial_attention(Tensor::full({1, 3, 4, 4}, 0.3), q.spatial);
    for (double v : flat.data()) EXPECT_EQ(v, flat.data()[0]);
}

TEST(Cbam, OpenAndHalfAttention) {
    nn::Rng rng(5);
    auto p = fu::CBAMParams::init(2, 1, 3, rng);
    const Tensor x = Tensor::uniform({1, 2, 4, 4}, rng, -1, 1);
    for (auto* t : {&p.mlp.w1, &p.mlp.b1, &p.mlp.w2, &p.spatial.kernel}) fill(*t, 0.0);
    fill(p.mlp.b2, 30.0);
    fill(p.spatial.bias, 30.0);
    const auto open = values(fu::cbam(x, p));
    for (std::size_t i = 0; i < open.size(); ++i) EXPECT_NEAR(open[i], x.data()[i], 1e-6);
    fill(p.mlp.b2, 0.0);
    fill(p.spatial.bias, 0.0);
    const auto quarter = values(fu::cbam(x, p));
    for (std::size_t i = 0; i < quarter.size(); ++i) EXPECT_NEAR(quarter[i], x.data()[i] / 4.0, 1e-7);
}

TEST(Cbam, MatchesComposedOracle) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(6);
    const auto p = random_params(4, 3, rng);
    const Tensor x = Tensor::uniform({2, 4, 5, 6}, rng, -1, 1);
    EXPECT_LT(max_rel(values(fu::cbam(x, p)), panoseg::reference::cbam_oracle(x, p)), 1e-12);
}

TEST(WindowOrigins, FlushWindowAtBorder) {
    EXPECT_EQ(fu::window_origins(16, 8, 4), (std::vector<std::size_t>{0, 4, 8}));
    EXPECT_EQ(fu::window_origins(10, 4, 4), (std::vector<std::size_t>{0, 4, 6}));
    EXPECT_EQ(fu::window_origins(5, 5, 5), (std::vector<std::size_t>{0}));
    EXPECT_THROW(fu::window_origins(4, 5, 1), std::invalid_argument);
}

TEST(Mcbam, WholeWindowEqualsCbamExactly) {
    nn::PrecisionScope f64(nn::Precision::f64);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::Rng rng(seed);
        const auto p = random_params(4, 3, rng);
        const Tensor x = Tensor::uniform({2, 4, 6, 10}, rng, -1, 1);
        EXPECT_EQ(values(fu::mcbam(x, {6, 10, 6, 10, 2, 3}, p)), values(fu::cbam(x, p)));
    }
}

TEST(Mcbam, TilingEqualsPerTileCbam) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(7);
    const auto p = random_params(3, 3, rng);
    const Tensor x = Tensor::uniform({1, 3, 8, 12}, rng, -1, 1);
    const Tensor y = fu::mcbam(x, {4, 4, 4, 4, 2, 3}, p);
    for (std::size_t ty = 0; ty < 2; ++ty)
        for (std::size_t tx = 0; tx < 3; ++tx) {
            const Tensor tile = nn::slice(nn::slice(x, 2, 4 * ty, 4), 3, 4 * tx, 4);
            const Tensor want = fu::cbam(tile, p);
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t i = 0; i < 4; ++i)
                    for (std::size_t j = 0; j < 4; ++j) {
                        EXPECT_NEAR(y.at({0, c, 4 * ty + i, 4 * tx + j}), want.at({0, c, i, j}), 1e-12);
                    }
        }
}

TEST(Mcbam, MatchesBruteForceOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        nn::Rng rng(100 + seed);
        const std::size_t b = 1 + seed % 2, c = 2 + seed % 7;
        const auto p = random_params(c, 3, rng);
        const Tensor x = Tensor::uniform({b, c, 16, 16}, rng, -1, 1);
        const fu::MCBAMConfig cfg{8, 8, 4, 4, 2, 3};
        EXPECT_LT(max_rel(values(fu::mcbam(x, cfg, p)), panoseg::reference::mcbam_oracle(x, cfg, p)), 1e-5);
    }
}

TEST(Mcbam, ChannelStageDependsOnlyOnCoveringWindows) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(9);
    auto p = random_params(3, 3, rng);
    // Spatial stage forced open so the output reflects the channel stage.
    fill(p.spatial.kernel, 0.0);
    fill(p.spatial.bias, 40.0);
    const fu::MCBAMConfig cfg{4, 4, 2, 2, 2, 3};
    const Tensor x = Tensor::uniform({1, 3, 12, 12}, rng, -1, 1);
    const std::size_t py = 1, px = 1;  // covered only by windows with origins (0,0)
    Tensor masked = Tensor::from_data(x.shape(), values(x));
    auto d = masked.data_mut();
    for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 12; ++i)
            for (std::size_t j = 0; j < 12; ++j)
                if (i >= 4 || j >= 4) d[(ch * 12 + i) * 12 + j] = 0.0;
    const Tensor a = fu::mcbam(x, cfg, p), b = fu::mcbam(masked, cfg, p);
    for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_EQ(a.at({0, ch, py, px}), b.at({0, ch, py, px}));
}

TEST(Mcbam, ConfigValidation) {
    EXPECT_THROW((fu::MCBAMConfig{4, 4, 5, 2, 2, 3}.validate()), std::invalid_argument);
    EXPECT_THROW((fu::MCBAMConfig{4, 4, 2, 2, 2, 4}.validate()), std::invalid_argument);
    EXPECT_THROW((fu::MCBAMConfig{2, 2, 1, 1, 2, 3}.validate()), std::invalid_argument);
    nn::Rng rng(1);
    const auto p = random_params(2, 3, rng);
    EXPECT_THROW(fu::mcbam(Tensor::zeros({1, 2, 3, 8}), {4, 4, 2, 2, 2, 3}, p), std::invalid_argument);
}

TEST(Mcbam, AttentionMapsInOpenInterval) {
    nn::Rng rng(10);
    const auto p = random_params(4, 3, rng);
    const Tensor x = Tensor::uniform({1, 4, 8, 8}, rng, -3, 3);
    const Tensor y = fu::mcbam(x, {4, 4, 2, 2, 2, 3}, p);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_LT(std::abs(y.data()[i]), std::abs(x.data()[i]) + 1e-12);
}

TEST(Mcbam, GradCheck) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::PrecisionScope f64(nn::Precision::f64);
        nn::Rng rng(seed);
        auto p = random_params(4, 3, rng);
        const double err = nn::grad_check(
            [&](const std::vector<Tensor>& in) {
                fu::CBAMParams q{{in[1], in[2], in[3], in[4]}, {in[5], in[6]}};
                return fu::mcbam(in[0], {4, 4, 2, 2, 2, 3}, q);
            },
            {Tensor::uniform({1, 4, 8, 8}, rng, -1, 1), p.mlp.w1, p.mlp.b1, p.mlp.w2, p.mlp.b2, p.spatial.kernel, p.spatial.bias});
        EXPECT_LT(err, 1e-4);
    }
}

TEST(FusionBlock, ShapeAndPassthrough) {
    nn::Rng rng(11);
    const fu::MCBAMConfig cfg{2, 2, 1, 1, 2, 1};
    auto p = fu::FusionBlockParams::init(4, 4, cfg, rng);
    const Tensor x = Tensor::uniform({2, 4, 3, 5}, rng, 0.1, 1);
    EXPECT_EQ(fu::fusion_block(x, fu::AttentionMode::mcbam, cfg, p).shape(), (nn::Shape{2, 4, 6, 10}));
    // Attention forced open and identity conv: out = upscale(relu(2x)).
    for (auto* t : {&p.attention.mlp.w1, &p.attention.mlp.b1, &p.attention.mlp.w2, &p.attention.spatial.kernel, &p.conv_b}) fill(*t, 0.0);
    fill(p.attention.mlp.b2, 40.0);
    fill(p.attention.spatial.bias, 40.0);
    fill(p.conv_w, 0.0);
    for (std::size_t c = 0; c < 4; ++c) p.conv_w.data_mut()[((c * 4 + c) * 3 + 1) * 3 + 1] = 1.0;
    nn::PrecisionScope f64(nn::Precision::f64);
    const auto got = values(fu::fusion_block(x, fu::AttentionMode::mcbam, cfg, p));
    const auto want = values(nn::interpolate_bilinear(x * 2.0, 6, 10));
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
}

TEST(FusionBlock, ModesAndGradCheck) {
    EXPECT_EQ(fu::attention_mode_from_string("none"), fu::AttentionMode::none);
    EXPECT_EQ(fu::to_string(fu::AttentionMode::mcbam), "mcbam");
    EXPECT_THROW(fu::attention_mode_from_string("x"), std::invalid_argument);
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(12);
    const fu::MCBAMConfig cfg{2, 2, 1, 1, 2, 1};
    const auto p = fu::FusionBlockParams::init(4, 3, cfg, rng);
    nn::NamedParams named;
    p.collect("", named);
    std::vector<Tensor> in{Tensor::uniform({1, 4, 3, 4}, rng, -1, 1)};
    for (auto& [n, t] : named) in.push_back(t);
    for (auto mode : {fu::AttentionMode::none, fu::AttentionMode::channel, fu::AttentionMode::cbam, fu::AttentionMode::mcbam}) {
        EXPECT_LT(nn::grad_check([&](const std::vector<Tensor>& x) { return fu::fusion_block(x[0], mode, cfg, p); }, in), 1e-4);
    }
}

TEST(McbamFault, FlipsGradientOnly) {
    nn::Rng rng(13);
    const auto p = random_params(2, 3, rng);
    const Tensor x = Tensor::uniform({1, 2, 4, 4}, rng, -1, 1);
    const auto clean = values(fu::mcbam(x, {2, 2, 1, 1, 2, 1}, p));
    fu::set_mcbam_backward_fault(true);
    const auto faulty = values(fu::mcbam(x, {2, 2, 1, 1, 2, 1}, p));
    fu::set_mcbam_backward_fault(false);
    EXPECT_EQ(clean, faulty);
}
