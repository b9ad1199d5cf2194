#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "panoseg/augment.hpp"
#include "panoseg/geometry.hpp"
#include "panoseg/losses.hpp"
#include "panoseg/metrics.hpp"
#include "panoseg/numerics/grad_check.hpp"
#include "panoseg/numerics/ops.hpp"
#include "panoseg/optimizer.hpp"
#include "panoseg/render.hpp"
#include "panoseg/training.hpp"

namespace nn = panoseg::nn;
namespace tr = panoseg::train;
using nn::Tensor;
using panoseg::LabelMap;
using panoseg::Mask;

namespace {

// Softmax probabilities of logits[1,K,h,w] computed per pixel in plain loops.
std::vector<std::vector<double>> softmax_oracle(const Tensor& logits) {
    const auto& s = logits.shape();
    const std::size_t k = s[1], n = s[2] * s[3];
    std::vector<std::vector<double>> p(k, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += std::exp(logits.data()[c * n + i]);
        for (std::size_t c = 0; c < k; ++c) p[c][i] = std::exp(logits.data()[c * n + i]) / z;
    }
    return p;
}

double jaccard_oracle(const Tensor& logits, const std::vector<std::int32_t>& labels) {
    const auto p = softmax_oracle(logits);
    double total = 0.0;
    int present = 0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        double inter = 0, sp = 0, sg = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double g = labels[i] == static_cast<int>(c) ? 1.0 : 0.0;
            inter += p[c][i] * g;
            sp += p[c][i];
            sg += g;
        }
        if (sg == 0) continue;
        ++present;
        total += 1.0 - (inter + tr::kJaccardEps) / (sp + sg - inter + tr::kJaccardEps);
    }
    return total / present;
}

LabelMap labels_of(std::size_t h, std::size_t w, std::vector<std::int32_t> v) {
    LabelMap l(h, w);
    l.values = std::move(v);
    return l;
}

}  // namespace

TEST(Losses, JaccardExamples) {
    nn::PrecisionScope f64(nn::Precision::f64);
    const std::vector<std::int32_t> balanced{0, 1, 0, 1};
    // Sums are 2, 2 and 1 per class.
    const double e = tr::kJaccardEps;
    EXPECT_NEAR(tr::jaccard_loss(Tensor::zeros({1, 2, 2, 2}), {balanced, {}}).item(), 1.0 - (1.0 + e) / (3.0 + e), 1e-15);
    EXPECT_NEAR(1.0 - (1.0 + e) / (3.0 + e), 2.0 / 3.0, 1e-7);
    std::vector<double> perfect(8);
    for (std::size_t i = 0; i < 4; ++i) perfect[balanced[i] * 4 + i] = 20, perfect[(1 - balanced[i]) * 4 + i] = -20;
    EXPECT_LT(tr::jaccard_loss(Tensor::from_data({1, 2, 2, 2}, perfect), {balanced, {}}).item(), 1e-4);
    // Only one correctly predicted pixel is left after ignoring.
    const std::vector<std::uint8_t> ignore{1, 1, 1, 0};
    EXPECT_LT(tr::jaccard_loss(Tensor::from_data({1, 2, 2, 2}, perfect), {balanced, ignore}).item(), 1e-4);
    const std::vector<std::uint8_t> all(4, 1);
    EXPECT_THROW(tr::jaccard_loss(Tensor::zeros({1, 2, 2, 2}), {balanced, all}), std::invalid_argument);
}

TEST(Losses, MatchScalarOracles) {
    nn::PrecisionScope f64(nn::Precision::f64);
    nn::Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor logits = Tensor::uniform({1, 3, 2, 2}, rng, -2, 2);
        std::vector<std::int32_t> labels(4);
        for (auto& l : labels) l = static_cast<std::int32_t>(rng() % 3);
        EXPECT_NEAR(tr::jaccard_loss(logits, {labels, {}}).item(), jaccard_oracle(logits, labels), 1e-12);
        const auto p = softmax_oracle(logits);
        double nll = 0.0;
        for (std::size_t i = 0; i < 4; ++i) nll -= std::log(p[labels[i]][i]);
        EXPECT_NEAR(tr::cross_entropy_loss(logits, {labels, {}}).item(), nll / 4, 1e-12);
    }
}

TEST(Losses, CrossEntropyExamplesAndRanges) {
    nn::PrecisionScope f64(nn::Precision::f64);
    const std::vector<std::int32_t> labels{0, 3, 5, 7};
    EXPECT_NEAR(tr::cross_entropy_loss(Tensor::zeros({1, 8, 2, 2}), {labels, {}}).item(), std::log(8.0), 1e-12);
    nn::Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor logits = Tensor::uniform({1, 8, 2, 2}, rng, -5, 5);
        const double j = tr::jaccard_loss(logits, {labels, {}}).item();
        EXPECT_GE(j, 0.0);
        EXPECT_LE(j, 1.0);
        EXPECT_GE(tr::cross_entropy_loss(logits, {labels, {}}).item(), 0.0);
    }
}

TEST(Losses, GradCheck) {
    const std::vector<std::int32_t> labels{0, 2, 1, 1, 2, 0};
    const std::vector<std::uint8_t> ignore{0, 0, 1, 0, 0, 0};
    nn::Rng rng(5);
    const Tensor x = Tensor::uniform({1, 3, 2, 3}, rng, -2, 2, true);
    EXPECT_LT(nn::grad_check([&](const auto& in) { return tr::jaccard_loss(in[0], {labels, ignore}); }, {x}), 1e-4);
    EXPECT_LT(nn::grad_check([&](const auto& in) { return tr::cross_entropy_loss(in[0], {labels, ignore}); }, {x}), 1e-4);
}

TEST(Losses, Schedule) {
    tr::LossSchedule s;
    EXPECT_EQ(s.active(0), tr::LossMode::cross_entropy);
    EXPECT_EQ(s.active(1), tr::LossMode::jaccard);
    s.period = 2;
    EXPECT_EQ(s.active(3), tr::LossMode::jaccard);
    EXPECT_EQ(s.active(4), tr::LossMode::cross_entropy);
    s.mode = tr::LossMode::jaccard;
    EXPECT_EQ(s.active(0), tr::LossMode::jaccard);
    EXPECT_EQ(tr::loss_mode_from_string("ce"), tr::LossMode::cross_entropy);
    EXPECT_THROW(tr::loss_mode_from_string("dice"), std::invalid_argument);
}

TEST(Adam, ZeroGradAndFirstStep) {
    std::vector<double> p{1.0, -2.0};
    tr::AdamState st;
    tr::adam_step(p, std::vector<double>{0.0, 0.0}, st, 0.1);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
    tr::AdamState fresh;
    const std::vector<double> g{0.5, -3.0};
    tr::adam_step(p, g, fresh, 0.1);
    for (std::size_t i = 0; i < 2; ++i) {
        const double expected = (i == 0 ? 1.0 : -2.0) - 0.1 * g[i] / (std::abs(g[i]) + 1e-8);
        EXPECT_NEAR(p[i], expected, 1e-6);
    }
}

TEST(Adam, QuadraticBowlConverges) {
    std::vector<double> p{3.0, -4.0, 0.5};
    const std::vector<double> target{1.0, 2.0, -1.0};
    tr::AdamState st;
    std::size_t steps = 0;
    auto err = [&] {
        double e = 0;
        for (std::size_t i = 0; i < 3; ++i) e += (p[i] - target[i]) * (p[i] - target[i]);
        return e;
    };
    for (; steps < 2000 && err() >= 1e-6; ++steps) {
        std::vector<double> g(3);
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2 * (p[i] - target[i]);
        tr::adam_step(p, g, st, 0.02);
    }
    EXPECT_LT(err(), 1e-6);
}

TEST(Augment, IdentityFlipAndAlignment) {
    const auto sample = panoseg::data::render_equirect(panoseg::data::random_scene(3, 16), 16, 32);
    const tr::AugmentDraw identity;
    const auto same = tr::apply_augment(sample, identity);
    EXPECT_EQ(same.labels, sample.labels);
    tr::AugmentDraw flip;
    flip.flip = true;
    const auto twice = tr::apply_augment(tr::apply_augment(sample, flip), flip);
    EXPECT_EQ(twice.labels, sample.labels);
    for (std::size_t i = 0; i < sample.normals.numel(); ++i)
        EXPECT_FLOAT_EQ(twice.normals.data()[i], sample.normals.data()[i]);

    nn::Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = tr::draw_augment(32, rng);
        const auto a = tr::apply_augment(sample, d);
        // Track every pixel back to its source and check all maps moved together.
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 32; ++x) {
                std::size_t src = (x + d.roll) % 32;
                if (d.flip) src = 31 - src;
                EXPECT_EQ(a.labels(y, x), sample.labels(y, src));
                EXPECT_EQ(a.instances(y, x), sample.instances(y, src));
                EXPECT_FLOAT_EQ(a.depth.at({y, x}), sample.depth.at({y, src}));
                for (std::size_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(a.rgb.at({c, y, x}), sample.rgb.at({d.rgb_order[c], y, src}));
                EXPECT_FLOAT_EQ(a.normals.at({0, y, x}), d.flip ? -sample.normals.at({0, y, src}) : sample.normals.at({0, y, src}));
            }
    }
}

TEST(Metrics, Examples) {
    const auto gt = labels_of(1, 4, {0, 0, 1, 1});
    auto r = tr::compute_metrics(gt, gt, nullptr, 3);
    EXPECT_EQ(r.miou, 1.0);
    EXPECT_EQ(r.macc, 1.0);
    EXPECT_FALSE(r.per_class_iou[2].has_value());
    r = tr::compute_metrics(labels_of(1, 4, {1, 1, 0, 0}), gt, nullptr, 2);
    EXPECT_EQ(r.miou, 0.0);
    // Confusion matrix (gt rows, pred cols): [[2,1,0],[0,1,1],[1,0,2]].
    const auto g3 = labels_of(1, 8, {0, 0, 0, 1, 1, 2, 2, 2});
    const auto p3 = labels_of(1, 8, {0, 0, 1, 1, 2, 0, 2, 2});
    r = tr::compute_metrics(p3, g3, nullptr, 3);
    EXPECT_NEAR(*r.per_class_iou[0], 2.0 / 4.0, 1e-15);
    EXPECT_NEAR(*r.per_class_iou[1], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(*r.per_class_iou[2], 2.0 / 4.0, 1e-15);
    EXPECT_NEAR(r.miou, (0.5 + 1.0 / 3.0 + 0.5) / 3.0, 1e-15);
    EXPECT_NEAR(r.macc, (2.0 / 3.0 + 0.5 + 2.0 / 3.0) / 3.0, 1e-15);
    Mask ignore(1, 8, 0);
    ignore(0, 2) = 1;
    EXPECT_EQ(tr::compute_metrics(p3, g3, &ignore, 3).counts.evaluated, 7u);

    // Consistent relabeling leaves the scores unchanged.
    auto perm = [](LabelMap l) {
        for (auto& v : l.values) v = (v + 1) % 3;
        return l;
    };
    const auto q = tr::compute_metrics(perm(p3), perm(g3), nullptr, 3);
    EXPECT_NEAR(q.miou, r.miou, 1e-15);
    EXPECT_NEAR(q.macc, r.macc, 1e-15);
}

TEST(Metrics, CsvLayout) {
    const auto gt = labels_of(1, 4, {0, 0, 1, 1});
    std::ostringstream os;
    tr::write_metrics_csv(os, tr::compute_metrics(gt, gt, nullptr, 2), {"a", "b"});
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "class,id,iou,acc,tp,fp,fn");
    EXPECT_NE(s.find("\nmean,"), std::string::npos);
}

TEST(EdgeEval, BandsBehaveAsConstructed) {
    const std::size_t h = 8, w = 40;
    LabelMap gt(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) gt(y, x) = static_cast<std::int32_t>((x / 5) % 3);
    const auto full = tr::edge_eval(gt, gt, nullptr, {1.0}, 3);
    EXPECT_EQ(full[0].report.miou, tr::compute_metrics(gt, gt, nullptr, 3).miou);

    LabelMap centre = gt, border = gt;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 15; x < 25; ++x) centre(y, x) = (gt(y, x) + 1) % 3;
        for (std::size_t x : {0ul, 1ul, 38ul, 39ul}) border(y, x) = (gt(y, x) + 1) % 3;
    }
    const auto c = tr::edge_eval(centre, gt, nullptr, {0.1}, 3);
    EXPECT_EQ(c[0].report.miou, 1.0);
    EXPECT_LT(tr::compute_metrics(centre, gt, nullptr, 3).miou, 1.0);
    const auto b = tr::edge_eval(border, gt, nullptr, {0.1}, 3);
    EXPECT_LT(b[0].report.miou, tr::compute_metrics(border, gt, nullptr, 3).miou);
}

TEST(Training, ShortRunLowersLossAndIsDeterministic) {
    panoseg::ModelConfig cfg;
    cfg.encoder.image_h = 16;
    cfg.encoder.image_w = 32;
    cfg.encoder.patch = 8;
    cfg.encoder.depth = 2;
    cfg.encoder.global_blocks = {1, 2};
    cfg.encoder.embed_dim = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.window = 2;
    cfg.mcbam = {2, 2, 1, 1, 4, 1};
    cfg.fusion_dim = 8;
    cfg.decoder_dim = 8;
    cfg.spherical_kernel = 3;
    const auto sample = panoseg::data::render_equirect(panoseg::data::random_scene(2, 16), 16, 32);
    tr::TrainOptions opt;
    opt.epochs = 30;
    opt.lr = 3e-3;
    opt.loss.mode = tr::LossMode::cross_entropy;
    auto run = [&] {
        panoseg::SegModel model(cfg, 0);
        return tr::train_model(model, {sample}, 10.0, opt);
    };
    const auto a = run(), b = run();
    EXPECT_EQ(a.steps, 30u);
    EXPECT_LT(a.epochs.back().mean_loss, 0.7 * a.epochs.front().mean_loss);
    for (std::size_t i = 0; i < a.epochs.size(); ++i) EXPECT_EQ(a.epochs[i].mean_loss, b.epochs[i].mean_loss);
}
