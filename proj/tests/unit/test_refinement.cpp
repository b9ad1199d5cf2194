#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "panoseg/numerics/ops.hpp"
#include "panoseg/refinement.hpp"

namespace nn = panoseg::nn;
namespace rf = panoseg::refinement;
using panoseg::LabelMap;
using panoseg::Mask;

namespace {

Mask rect(std::size_t h, std::size_t w, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
    Mask m(h, w);
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) m(y, x) = 1;
    return m;
}

// logits[K,h,w] with a large margin on `labels`.
nn::Tensor one_hot_logits(const LabelMap& labels, std::size_t k) {
    std::vector<double> v(k * labels.size(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) v[static_cast<std::size_t>(labels.values[i]) * labels.size() + i] = 5.0;
    return nn::Tensor::from_data({k, labels.height, labels.width}, v);
}

LabelMap refine_oracle(const LabelMap& initial, std::vector<rf::InstanceMask> inst) {
    std::stable_sort(inst.begin(), inst.end(), [](const auto& a, const auto& b) {
        return a.quality != b.quality ? a.quality > b.quality : a.area > b.area;
    });
    LabelMap out = initial;
    std::vector<bool> claimed(initial.size(), false);
    for (const auto& m : inst) {
        std::map<int, int> votes;
        for (std::size_t i = 0; i < initial.size(); ++i)
            if (m.mask.values[i]) ++votes[initial.values[i]];
        int best = -1, best_n = -1;
        for (auto [c, n] : votes)
            if (n > best_n) best = c, best_n = n;
        for (std::size_t i = 0; i < initial.size(); ++i)
            if (m.mask.values[i] && !claimed[i]) out.values[i] = best, claimed[i] = true;
    }
    return out;
}

LabelMap fuse_oracle(const std::vector<rf::ScoredClassMask>& masks, std::size_t h, std::size_t w,
                     const rf::ScoreFusionOptions& o) {
    LabelMap out(h, w);
    for (std::size_t i = 0; i < h * w; ++i) {
        double best = 0.0;
        int label = -1;
        for (std::size_t c = 0; c < o.num_classes; ++c)
            for (const auto& m : masks) {
                if (m.confidence < o.conf_min || m.class_id != static_cast<int>(c)) continue;
                const double s = m.mask[i] * m.confidence;
                if (s > best) best = s, label = static_cast<int>(c);
            }
        out.values[i] = (label < 0 || best < o.clutter_max) ? o.clutter_class : label;
    }
    return out;
}

}  // namespace

TEST(ConnectedComponents, FourConnectivity) {
    LabelMap l(3, 3, 0);
    l(0, 0) = 1;
    l(1, 1) = 1;
    l(2, 2) = 1;
    std::size_t n = 0;
    const auto cc = rf::connected_components(l, &n);
    EXPECT_EQ(n, 5u);
    EXPECT_NE(cc(0, 0), cc(1, 1));
    EXPECT_EQ(cc(0, 1), cc(1, 2));
    EXPECT_EQ(cc(1, 0), cc(2, 1));
    EXPECT_NE(cc(0, 1), cc(1, 0));
}

TEST(ProposeInstances, Examples) {
    const auto uniform = rf::propose_instances(nn::Tensor::zeros({4, 4, 8}));
    ASSERT_EQ(uniform.size(), 1u);
    EXPECT_EQ(uniform[0].area, 32u);
    EXPECT_NEAR(uniform[0].quality, 0.25, 1e-7);

    LabelMap l(8, 16, 0);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 5; ++x) l(y, x) = 1, l(y + 4, x + 10) = 1;
    auto two = rf::propose_instances(one_hot_logits(l, 2));
    EXPECT_EQ(std::count_if(two.begin(), two.end(), [](const auto& m) { return m.area == 20; }), 2);

    LabelMap small(8, 8, 0);
    for (std::size_t x = 0; x < 5; ++x) small(0, x) = small(1, x) = 1;
    const auto dropped = rf::propose_instances(one_hot_logits(small, 2));
    ASSERT_EQ(dropped.size(), 1u);
    EXPECT_EQ(dropped[0].area, 54u);
}

TEST(MaskIou, Examples) {
    const Mask a = rect(2, 4, 0, 0, 2, 2), b = rect(2, 4, 0, 1, 2, 3);
    EXPECT_EQ(rf::mask_iou(a, a), 1.0);
    EXPECT_EQ(rf::mask_iou(rect(2, 4, 0, 0, 2, 2), rect(2, 4, 0, 2, 2, 4)), 0.0);
    EXPECT_NEAR(rf::mask_iou(a, b), 2.0 / 6.0, 1e-15);
    EXPECT_THROW(rf::mask_iou(a, Mask(3, 4)), std::invalid_argument);
}

TEST(GreedyNms, HandEnumeratedCases) {
    const Mask a = rect(1, 6, 0, 0, 1, 3), b = rect(1, 6, 0, 1, 1, 4), c = rect(1, 6, 0, 2, 1, 5);
    // IoU(A,B) = IoU(B,C) = 0.5, IoU(A,C) = 0.2.
    auto kept = rf::greedy_mask_nms({rf::make_instance(a, 0.9), rf::make_instance(b, 0.8), rf::make_instance(c, 0.7)});
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].mask, a);
    EXPECT_EQ(kept[1].mask, c);
    // B first suppresses both neighbours.
    kept = rf::greedy_mask_nms({rf::make_instance(a, 0.8), rf::make_instance(b, 0.9), rf::make_instance(c, 0.7)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].mask, b);
    // Above the chain overlap everything survives, in quality order.
    kept = rf::greedy_mask_nms({rf::make_instance(c, 0.7), rf::make_instance(a, 0.9), rf::make_instance(b, 0.8)}, 0.6);
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_EQ(kept[0].mask, a);
    EXPECT_EQ(kept[2].mask, c);
    kept = rf::greedy_mask_nms({rf::make_instance(a, 0.8), rf::make_instance(a, 0.9)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].quality, 0.9);
    // Equal quality: the larger mask goes first.
    kept = rf::greedy_mask_nms({rf::make_instance(rect(1, 6, 0, 0, 1, 2), 0.5), rf::make_instance(a, 0.5)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].mask, a);
    EXPECT_EQ(rf::greedy_mask_nms({rf::make_instance(a, 0.3)}).size(), 1u);
}

TEST(GreedyNms, OutputIsAntichainInQualityOrder) {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<rf::InstanceMask> in;
        for (int i = 0; i < 6; ++i) {
            const std::size_t y = gen() % 4, x = gen() % 4;
            in.push_back(rf::make_instance(rect(6, 6, y, x, y + 2 + gen() % 2, x + 2 + gen() % 2), (gen() % 100) / 100.0));
        }
        const auto kept = rf::greedy_mask_nms(in, 0.4);
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t j = i + 1; j < kept.size(); ++j) {
                EXPECT_LT(rf::mask_iou(kept[i], kept[j]), 0.4);
                EXPECT_GE(kept[i].quality, kept[j].quality);
            }
    }
}

TEST(SelectDualView, Examples) {
    using V = rf::SourceView;
    const Mask m = rect(4, 8, 0, 0, 2, 4);
    auto kept = rf::select_dual_view({rf::make_instance(m, 0.7, "rgb", V::original), rf::make_instance(m, 0.9, "rgb", V::shifted)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].quality, 0.9);

    const Mask big = rect(30, 30, 0, 0, 25, 20), small = rect(30, 30, 0, 0, 25, 15);
    ASSERT_GE(rf::mask_iou(big, small), 0.5);
    kept = rf::select_dual_view({rf::make_instance(small, 0.81, "rgb", V::original), rf::make_instance(big, 0.80, "rgb", V::shifted)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].area, 500u);

    kept = rf::select_dual_view({rf::make_instance(rect(4, 8, 0, 0, 2, 2), 0.5, "rgb", V::original),
                                 rf::make_instance(rect(4, 8, 2, 4, 4, 8), 0.4, "rgb", V::shifted)});
    EXPECT_EQ(kept.size(), 2u);
}

TEST(RefineSemantics, Examples) {
    LabelMap init(2, 5, 0);
    for (std::size_t x = 3; x < 5; ++x) init(0, x) = init(1, x) = 1;
    EXPECT_EQ(rf::refine_semantics(init, {}), init);
    EXPECT_EQ(rf::refine_semantics(init, {rf::make_instance(rect(2, 5, 0, 0, 2, 2), 0.9)}), init);
    const auto out = rf::refine_semantics(init, {rf::make_instance(rect(2, 5, 0, 0, 2, 5), 0.9)});
    EXPECT_EQ(out, LabelMap(2, 5, 0));
    EXPECT_EQ(rf::refine_semantics(one_hot_logits(init, 2), {}), init);
}

TEST(RefineSemantics, MatchesOracleOnSmallGrids) {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 3000; ++trial) {
        const std::size_t h = 1 + gen() % 6, w = 1 + gen() % 6;
        LabelMap init(h, w);
        for (auto& v : init.values) v = static_cast<int>(gen() % 3);
        std::vector<rf::InstanceMask> inst;
        for (std::size_t i = 0, n = gen() % 4; i < n; ++i) {
            Mask m(h, w);
            for (auto& v : m.values) v = gen() % 2;
            m.values[gen() % m.size()] = 1;
            inst.push_back(rf::make_instance(m, (gen() % 5) / 4.0));
        }
        const auto got = rf::refine_semantics(init, inst);
        ASSERT_EQ(got, refine_oracle(init, inst));
        for (std::size_t i = 0; i < got.size(); ++i) {
            bool present = got.values[i] == init.values[i];
            for (const auto& m : inst)
                if (m.mask.values[i])
                    for (std::size_t j = 0; j < got.size(); ++j) present |= m.mask.values[j] && init.values[j] == got.values[i];
            EXPECT_TRUE(present);
        }
    }
}

TEST(FuseScores, Examples) {
    const rf::ScoreFusionOptions o;
    EXPECT_EQ(rf::fuse_open_vocab_scores({}, 2, 3, o), LabelMap(2, 3, 7));
    rf::ScoredClassMask one{std::vector<double>{1, 1, 0, 0}, 2, 2, 0.9, 3};
    const auto l = rf::fuse_open_vocab_scores({one}, 2, 2, o);
    EXPECT_EQ(l.values, (std::vector<std::int32_t>{3, 3, 7, 7}));
    rf::ScoredClassMask a{std::vector<double>{0.5}, 1, 1, 0.8, 1}, b{std::vector<double>{0.9}, 1, 1, 0.3, 2};
    EXPECT_EQ(rf::fuse_open_vocab_scores({a, b}, 1, 1, o)(0, 0), 1);
    b.confidence = 0.2;
    a.mask = {0.05};
    EXPECT_EQ(rf::fuse_open_vocab_scores({a, b}, 1, 1, o)(0, 0), 7);
}

TEST(FuseScores, MatchesOracleOnSmallGrids) {
    std::mt19937 gen(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    rf::ScoreFusionOptions o;
    o.num_classes = 3;
    o.clutter_class = 2;
    for (int trial = 0; trial < 3000; ++trial) {
        const std::size_t h = 1 + gen() % 6, w = 1 + gen() % 6;
        std::vector<rf::ScoredClassMask> masks;
        for (std::size_t i = 0, n = gen() % 4; i < n; ++i) {
            rf::ScoredClassMask m{std::vector<double>(h * w), h, w, u(gen), static_cast<int>(gen() % 3)};
            for (auto& v : m.mask) v = gen() % 3 == 0 ? 0.0 : u(gen);
            masks.push_back(m);
        }
        ASSERT_EQ(rf::fuse_open_vocab_scores(masks, h, w, o), fuse_oracle(masks, h, w, o));
    }
}

TEST(MajorityFilter, Examples) {
    const LabelMap flat(5, 5, 2);
    EXPECT_EQ(rf::majority_filter_3x3(flat), flat);
    LabelMap speck = flat;
    speck(2, 2) = 4;
    EXPECT_EQ(rf::majority_filter_3x3(speck), flat);
    LabelMap edge(6, 6, 0);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 3; x < 6; ++x) edge(y, x) = 1;
    EXPECT_EQ(rf::majority_filter_3x3(edge), edge);
}

TEST(MajorityFilter, NeverAddsLabels) {
    std::mt19937 gen(17);
    for (int trial = 0; trial < 200; ++trial) {
        LabelMap l(1 + gen() % 7, 1 + gen() % 7);
        for (auto& v : l.values) v = static_cast<int>(gen() % 4);
        const auto f = rf::majority_filter_3x3(l);
        for (auto v : f.values) EXPECT_NE(std::find(l.values.begin(), l.values.end(), v), l.values.end());
    }
}

TEST(InstanceGuidedRefinement, SingleViewIsConsistent) {
    LabelMap l(8, 16, 0);
    for (std::size_t y = 2; y < 7; ++y)
        for (std::size_t x = 3; x < 9; ++x) l(y, x) = 1;
    const auto logits = nn::reshape(one_hot_logits(l, 2), {1, 2, 8, 16});
    EXPECT_EQ(rf::instance_guided_refinement(logits, logits, nn::Tensor(), 8), l);
}
