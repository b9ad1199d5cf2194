#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "panoseg/numerics/grad_check.hpp"
#include "panoseg/numerics/kernels.hpp"
#include "panoseg/numerics/ops.hpp"
#include "panoseg/reference/kernels.hpp"
#include "panoseg/reference/oracles.hpp"

namespace nn = panoseg::nn;
using nn::Tensor;

namespace {

Tensor vec(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor::from_data({n}, std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Elementwise, AddMulMax) {
    EXPECT_EQ(values(vec({1, 2}) + vec({3, 4})), (std::vector<double>{4, 6}));
    EXPECT_EQ(values(vec({2}) * 0.0), (std::vector<double>{0}));
    EXPECT_EQ(values(nn::maximum(vec({1, 5}), vec({4, 2}))), (std::vector<double>{4, 5}));
}

TEST(Elementwise, MaxMatchesScalarLoop) {
    nn::Rng rng(3);
    const Tensor a = Tensor::uniform({4, 5}, rng, -1, 1), b = Tensor::uniform({5}, rng, -1, 1);
    const Tensor hi = nn::maximum(a, b), lo = nn::minimum(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_EQ(hi.at({i, j}), std::max(a.at({i, j}), b.at({j})));
            EXPECT_EQ(lo.at({i, j}), std::min(a.at({i, j}), b.at({j})));
        }
}

TEST(Elementwise, TrailingBroadcastOnly) {
    EXPECT_THROW(Tensor::zeros({2, 3}) + Tensor::zeros({3, 2}), nn::ShapeError);
    EXPECT_EQ((Tensor::zeros({2, 3}) + Tensor::zeros({2, 1, 1})).shape(), (nn::Shape{2, 2, 3}));
    EXPECT_THROW(Tensor::zeros({2, 3}) + Tensor::zeros({2}), nn::ShapeError);
    EXPECT_NO_THROW(Tensor::zeros({2, 3}) + Tensor::zeros({1, 3}));
}

TEST(Elementwise, NonFiniteIsAnError) {
    EXPECT_THROW(vec({1.0}) / vec({0.0}), nn::NumericError);
    EXPECT_THROW(nn::log(vec({0.0})), nn::NumericError);
}

TEST(Matmul, IdentityAndOrthogonal) {
    const Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(values(nn::matmul(eye, m)), values(m));
    EXPECT_EQ(nn::matmul(Tensor::from_data({1, 2}, {1, 0}), Tensor::from_data({2, 1}, {0, 1})).item(), 0.0);
    EXPECT_THROW(nn::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), nn::ShapeError);
}

TEST(Matmul, MatchesTripleLoop) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(5);
    const Tensor a = Tensor::uniform({3, 4}, rng, -1, 1), b = Tensor::uniform({4, 2}, rng, -1, 1);
    const Tensor c = nn::matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a.at({i, k}) * b.at({k, j});
            EXPECT_NEAR(c.at({i, j}), s, 1e-12);
        }
}

TEST(Conv2d, OneByOneIdentity) {
    nn::Rng rng(1);
    const Tensor x = Tensor::uniform({1, 1, 3, 4}, rng, -1, 1);
    const Tensor y = nn::conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0), Tensor{}, nn::Conv2dOptions::same(1, 1, nn::PaddingMode::zero));
    EXPECT_EQ(values(y), values(x));
}

TEST(Conv2d, SphericalOnesGivesSix) {
    const Tensor x = Tensor::full({1, 1, 2, 4}, 1.0);
    const Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor y = nn::conv2d(x, k, Tensor{}, nn::Conv2dOptions::same(3, 3, nn::PaddingMode::spherical));
    for (double v : y.data()) EXPECT_EQ(v, 6.0);
    const Tensor z = nn::conv2d(x, k, Tensor{}, nn::Conv2dOptions::same(3, 3, nn::PaddingMode::zero));
    EXPECT_EQ(values(z), (std::vector<double>{4, 6, 6, 4, 4, 6, 6, 4}));
}

TEST(Conv2d, MatchesMaterializedPaddingOracle) {
    nn::PrecisionScope f64(nn::Precision::f64);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::Rng rng(seed);
        const Tensor x = Tensor::uniform({2, 3, 5, 7}, rng, -1, 1), k = Tensor::uniform({2, 3, 3, 5}, rng, -1, 1),
                     b = Tensor::uniform({2}, rng, -1, 1);
        for (auto mode : {nn::PaddingMode::zero, nn::PaddingMode::spherical}) {
            for (std::size_t stride : {1, 2}) {
                nn::Conv2dOptions o{stride, mode, 1, 2};
                EXPECT_EQ(values(nn::conv2d(x, k, b, o)), panoseg::reference::conv2d_padded_oracle(x, k, b, stride, mode, 1, 2));
            }
        }
    }
}

TEST(Conv2d, SphericalCommutesWithRollZeroDoesNot) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(11);
    const Tensor x = Tensor::uniform({1, 2, 4, 8}, rng, -1, 1), k = Tensor::uniform({3, 2, 3, 3}, rng, -1, 1);
    const auto sph = nn::Conv2dOptions::same(3, 3, nn::PaddingMode::spherical);
    const auto zero = nn::Conv2dOptions::same(3, 3, nn::PaddingMode::zero);
    for (std::ptrdiff_t s = -8; s <= 8; ++s) {
        EXPECT_EQ(values(nn::conv2d(nn::roll(x, s, -1), k, Tensor{}, sph)), values(nn::roll(nn::conv2d(x, k, Tensor{}, sph), s, -1)));
    }
    EXPECT_NE(values(nn::conv2d(nn::roll(x, 3, -1), k, Tensor{}, zero)), values(nn::roll(nn::conv2d(x, k, Tensor{}, zero), 3, -1)));
}

TEST(Conv2d, Errors) {
    EXPECT_THROW(nn::conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor{}, nn::Conv2dOptions{}), nn::ShapeError);
    EXPECT_THROW(nn::conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor{}, nn::Conv2dOptions{}), nn::ShapeError);
}

TEST(Reduce, SumMaxMean) {
    const Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(values(nn::reduce(nn::ReduceOp::sum, m, {1})), (std::vector<double>{3, 7}));
    EXPECT_EQ(nn::reduce(nn::ReduceOp::sum, m, {1}, true).shape(), (nn::Shape{2, 1}));
    const auto r = nn::max_with_argmax(Tensor::full({5}, 2.5), 0);
    EXPECT_EQ(r.values.item(), 2.5);
    EXPECT_EQ(r.indices[0], 0u);
    EXPECT_THROW(nn::reduce(nn::ReduceOp::sum, m, {}), std::invalid_argument);
}

TEST(Reduce, MeanOfStandardNormalIsSmall) {
    nn::Rng rng(2024);
    EXPECT_LT(std::abs(nn::mean(Tensor::randn({100, 100}, rng)).item()), 0.05);
}

TEST(Activation, StableAndBounded) {
    EXPECT_EQ(nn::sigmoid(vec({0.0})).item(), 0.5);
    const Tensor s = nn::softmax(vec({1e9, 0.0}), 0);
    EXPECT_EQ(values(s), (std::vector<double>{1.0, 0.0}));
    const Tensor x = vec({-3.0}).set_requires_grad(true);
    const Tensor y = nn::relu(x);
    EXPECT_EQ(y.item(), 0.0);
    y.backward();
    EXPECT_EQ(x.grad()[0], 0.0);
    const Tensor big = nn::sigmoid(vec({-80.0, 80.0}));
    EXPECT_GT(big.data()[0], 0.0);
}

TEST(Activation, SoftmaxRowsSumToOne) {
    nn::Rng rng(8);
    const Tensor p = nn::softmax(Tensor::uniform({6, 9}, rng, -30, 30), 1);
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 9; ++j) s += p.at({i, j});
        EXPECT_NEAR(s, 1.0, 1e-6);
    }
    const Tensor q = nn::sigmoid(Tensor::uniform({50}, rng, -15, 15));
    for (double v : q.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Bilinear, IdentityConstantAndHandValues) {
    nn::Rng rng(4);
    const Tensor x = Tensor::uniform({1, 2, 3, 5}, rng, -1, 1);
    EXPECT_EQ(values(nn::interpolate_bilinear(x, 3, 5)), values(x));
    for (double v : values(nn::interpolate_bilinear(Tensor::full({1, 1, 1, 1}, 7.0), 3, 4))) EXPECT_EQ(v, 7.0);
    // 2x2 -> 4x4: sample positions -0.25, 0.25, 0.75, 1.25 clamp to 0, 0.25, 0.75, 1.
    nn::PrecisionScope f64(nn::Precision::f64);
    const Tensor y = nn::interpolate_bilinear(Tensor::from_data({1, 1, 2, 2}, {0, 1, 2, 3}), 4, 4);
    const std::vector<double> w{0.0, 0.25, 0.75, 1.0};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y.at({0, 0, i, j}), 2.0 * w[i] + w[j]);
}

TEST(Bilinear, MatchesScalarOracle) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(6);
    const Tensor x = Tensor::uniform({2, 3, 4, 6}, rng, -1, 1);
    const auto got = nn::interpolate_bilinear(x, 7, 13);
    const auto want = panoseg::reference::bilinear_oracle(x, 7, 13);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.data()[i], want[i], 1e-12);
}

TEST(Layout, RollPadSliceConcat) {
    EXPECT_EQ(values(nn::roll(vec({1, 2, 3, 4}), 2, 0)), (std::vector<double>{3, 4, 1, 2}));
    EXPECT_EQ(values(nn::roll(vec({1, 2, 3, 4}), -1, 0)), (std::vector<double>{4, 1, 2, 3}));
    EXPECT_EQ(values(nn::pad(vec({1, 2}), 0, 1, 2)), (std::vector<double>{0, 1, 2, 0, 0}));
    EXPECT_EQ(values(nn::slice(vec({1, 2, 3, 4}), 0, 1, 2)), (std::vector<double>{2, 3}));
    EXPECT_EQ(values(nn::concat({vec({1}), vec({2, 3})}, 0)), (std::vector<double>{1, 2, 3}));
}

TEST(GradCheck, SquareHasTinyError) {
    nn::Rng rng(1);
    const double err = nn::grad_check([](const std::vector<Tensor>& in) { return in[0] * in[0]; },
                                      {Tensor::uniform({7}, rng, -2, 2)});
    EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, DetectsWrongGradient) {
    nn::Rng rng(1);
    const double err = nn::grad_check([](const std::vector<Tensor>& in) { return nn::detail::flip_gradient(in[0] * in[0]); },
                                      {Tensor::uniform({4}, rng, 0.5, 2)});
    EXPECT_GT(err, 0.5);
}

TEST(GradCheck, SphericalConvBelowOneInAMillion) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        nn::Rng rng(seed);
        const double err = nn::grad_check(
            [](const std::vector<Tensor>& in) {
                return nn::conv2d(in[0], in[1], in[2], nn::Conv2dOptions::same(3, 3, nn::PaddingMode::spherical));
            },
            {Tensor::uniform({1, 2, 4, 6}, rng, -1, 1), Tensor::uniform({2, 2, 3, 3}, rng, -1, 1), Tensor::uniform({2}, rng, -1, 1)});
        EXPECT_LT(err, 1e-6);
    }
}

TEST(Precision, F32RoundsAndF64DoesNot) {
    const double third = 1.0 / 3.0;
    EXPECT_EQ((vec({third}) * 1.0).item(), static_cast<double>(static_cast<float>(third)));
    nn::PrecisionScope f64(nn::Precision::f64);
    EXPECT_EQ((vec({third}) * 1.0).item(), third);
}

TEST(Determinism, SameSeedSameBytes) {
    auto run = [] {
        nn::Rng rng(77);
        const Tensor x = Tensor::uniform({1, 2, 5, 6}, rng, -1, 1), k = Tensor::uniform({2, 2, 3, 3}, rng, -1, 1);
        return values(nn::softmax(nn::conv2d(x, k, Tensor{}, nn::Conv2dOptions::same(3, 3, nn::PaddingMode::spherical)), 1));
    };
    EXPECT_EQ(run(), run());
}

TEST(Kernels, ParallelMatchesSerialReference) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    auto random = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = u(rng);
        return v;
    };
    panoseg::nn::kernels::ConvGeometry g;
    g.batch = 2;
    g.in_channels = 3;
    g.out_channels = 4;
    g.height = 6;
    g.width = 10;
    g.kernel_h = 3;
    g.kernel_w = 5;
    g.pad_h = 1;
    g.pad_w = 2;
    g.stride = 2;
    g.padding = nn::PaddingMode::spherical;
    const auto x = random(2 * 3 * 6 * 10), w = random(4 * 3 * 3 * 5), b = random(4);
    std::vector<double> a(2 * 4 * g.out_h() * g.out_w()), r(a.size());
    panoseg::nn::kernels::conv2d_forward(g, x.data(), w.data(), b.data(), a.data());
    panoseg::reference::kernels::conv2d_forward(g, x.data(), w.data(), b.data(), r.data());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], r[i], 1e-12);
}
