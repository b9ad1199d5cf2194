#include "panoseg/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "panoseg/geometry.hpp"

namespace panoseg::refinement {

using nn::Tensor;

namespace {

struct LogitView {
    std::size_t classes, height, width;
    std::span<const double> values;
};

LogitView view_logits(const Tensor& logits) {
    if (logits.rank() == 3) return {logits.dim(0), logits.dim(1), logits.dim(2), logits.data()};
    if (logits.rank() == 4 && logits.dim(0) == 1) return {logits.dim(1), logits.dim(2), logits.dim(3), logits.data()};
    throw nn::ShapeError("expected logits [K,h,w] or [1,K,h,w], got " + nn::to_string(logits.shape()));
}

// Lowest-id mode of `labels` over the pixels set in `mask`.
std::int32_t modal_label(const LabelMap& labels, const Mask& mask) {
    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.values[i]) continue;
        const auto l = static_cast<std::size_t>(labels.values[i]);
        if (l >= counts.size()) counts.resize(l + 1, 0);
        ++counts[l];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] > counts[best]) best = c;
    }
    return static_cast<std::int32_t>(best);
}

std::vector<std::size_t> quality_order(const std::vector<InstanceMask>& masks) {
    std::vector<std::size_t> order(masks.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (masks[a].quality != masks[b].quality) return masks[a].quality > masks[b].quality;
        return masks[a].area > masks[b].area;
    });
    return order;
}

}  // namespace

InstanceMask make_instance(Mask mask, double quality, std::string modality, SourceView view) {
    InstanceMask m;
    m.area = static_cast<std::size_t>(std::count_if(mask.values.begin(), mask.values.end(), [](auto v) { return v != 0; }));
    if (m.area == 0) throw std::invalid_argument("instance mask is empty");
    if (quality < 0.0 || quality > 1.0) throw std::invalid_argument("instance quality must lie in [0,1]");
    m.mask = std::move(mask);
    m.quality = quality;
    m.source_modality = std::move(modality);
    m.source_view = view;
    return m;
}

LabelMap argmax_labels(const Tensor& logits) {
    const auto lv = view_logits(logits);
    const std::size_t plane = lv.height * lv.width;
    LabelMap out(lv.height, lv.width, 0);
    for (std::size_t i = 0; i < plane; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < lv.classes; ++k) {
            if (lv.values[k * plane + i] > lv.values[best * plane + i]) best = k;
        }
        out.values[i] = static_cast<std::int32_t>(best);
    }
    return out;
}

Grid<std::int32_t> connected_components(const LabelMap& labels, std::size_t* count) {
    Grid<std::int32_t> comp(labels.height, labels.width, 0);
    std::int32_t next = 0;
    std::queue<std::size_t> q;
    for (std::size_t start = 0; start < labels.size(); ++start) {
        if (comp.values[start]) continue;
        comp.values[start] = ++next;
        q.push(start);
        while (!q.empty()) {
            const std::size_t p = q.front();
            q.pop();
            const std::size_t y = p / labels.width, x = p % labels.width;
            auto visit = [&](std::size_t n) {
                if (!comp.values[n] && labels.values[n] == labels.values[p]) {
                    comp.values[n] = next;
                    q.push(n);
                }
            };
            if (y > 0) visit(p - labels.width);
            if (y + 1 < labels.height) visit(p + labels.width);
            if (x > 0) visit(p - 1);
            if (x + 1 < labels.width) visit(p + 1);
        }
    }
    if (count) *count = static_cast<std::size_t>(next);
    return comp;
}

std::vector<InstanceMask> propose_instances(const Tensor& logits, const ProposalOptions& options) {
    const auto lv = view_logits(logits);
    const std::size_t plane = lv.height * lv.width;
    const LabelMap labels = argmax_labels(logits);

    std::vector<double> confidence(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        double mx = lv.values[i];
        for (std::size_t k = 1; k < lv.classes; ++k) mx = std::max(mx, lv.values[k * plane + i]);
        double total = 0.0;
        for (std::size_t k = 0; k < lv.classes; ++k) total += std::exp(lv.values[k * plane + i] - mx);
        confidence[i] = 1.0 / total;
    }

    std::size_t count = 0;
    const auto comp = connected_components(labels, &count);
    std::vector<std::size_t> area(count + 1, 0);
    std::vector<double> conf_sum(count + 1, 0.0);
    for (std::size_t i = 0; i < plane; ++i) {
        ++area[comp.values[i]];
        conf_sum[comp.values[i]] += confidence[i];
    }
    std::vector<InstanceMask> out;
    for (std::size_t c = 1; c <= count; ++c) {
        if (area[c] < options.min_area) continue;
        Mask m(lv.height, lv.width, 0);
        for (std::size_t i = 0; i < plane; ++i) m.values[i] = comp.values[i] == static_cast<std::int32_t>(c);
        const double quality = std::clamp(conf_sum[c] / static_cast<double>(area[c]), 0.0, 1.0);
        out.push_back(make_instance(std::move(m), quality, "logits"));
    }
    return out;
}

double mask_iou(const Mask& a, const Mask& b) {
    if (!a.same_dims(b)) throw nn::ShapeError("mask_iou: mask dims differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a.values[i] != 0, y = b.values[i] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_iou(const InstanceMask& a, const InstanceMask& b) { return mask_iou(a.mask, b.mask); }

std::vector<InstanceMask> greedy_mask_nms(std::vector<InstanceMask> masks, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw std::invalid_argument("nms: threshold must lie in (0,1]");
    std::vector<InstanceMask> kept;
    for (auto i : quality_order(masks)) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                            [&](const InstanceMask& k) { return mask_iou(k, masks[i]) >= iou_threshold; });
        if (!suppressed) kept.push_back(std::move(masks[i]));
    }
    return kept;
}

std::vector<InstanceMask> select_dual_view(const std::vector<InstanceMask>& masks, const DualViewOptions& options) {
    std::vector<bool> alive(masks.size(), true);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (masks[i].source_view != SourceView::original) continue;
        for (std::size_t j = 0; j < masks.size() && alive[i]; ++j) {
            if (!alive[j] || masks[j].source_view != SourceView::shifted) continue;
            if (mask_iou(masks[i], masks[j]) < options.iou_threshold) continue;
            const double dq = masks[i].quality - masks[j].quality;
            bool keep_original;
            if (std::abs(dq) <= options.quality_margin) {
                keep_original = masks[i].area >= masks[j].area;
            } else {
                keep_original = dq > 0.0;
            }
            alive[keep_original ? j : i] = false;
        }
    }
    std::vector<InstanceMask> survivors;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (alive[i]) survivors.push_back(masks[i]);
    }
    return greedy_mask_nms(std::move(survivors), options.iou_threshold);
}

LabelMap refine_semantics(const LabelMap& initial, const std::vector<InstanceMask>& instances) {
    LabelMap out = initial;
    Mask claimed(initial.height, initial.width, 0);
    for (auto idx : quality_order(instances)) {
        const auto& inst = instances[idx];
        if (!inst.mask.same_dims(initial)) throw nn::ShapeError("refine_semantics: instance dims differ from logits");
        const std::int32_t label = modal_label(initial, inst.mask);
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (inst.mask.values[i] && !claimed.values[i]) {
                out.values[i] = label;
                claimed.values[i] = 1;
            }
        }
    }
    return out;
}

LabelMap refine_semantics(const Tensor& logits, const std::vector<InstanceMask>& instances) {
    return refine_semantics(argmax_labels(logits), instances);
}

LabelMap fuse_open_vocab_scores(const std::vector<ScoredClassMask>& masks, std::size_t height, std::size_t width,
                                const ScoreFusionOptions& options) {
    const std::size_t plane = height * width;
    std::vector<double> scores(options.num_classes * plane, 0.0);
    for (const auto& m : masks) {
        if (m.height != height || m.width != width || m.mask.size() != plane) {
            throw nn::ShapeError("fuse_open_vocab_scores: mask dims differ");
        }
        if (!std::isfinite(m.confidence)) throw std::invalid_argument("fuse_open_vocab_scores: non-finite confidence");
        if (m.class_id < 0 || static_cast<std::size_t>(m.class_id) >= options.num_classes) {
            throw std::invalid_argument("fuse_open_vocab_scores: class id out of range");
        }
        if (m.confidence < options.conf_min) continue;
        double* s = scores.data() + static_cast<std::size_t>(m.class_id) * plane;
        for (std::size_t i = 0; i < plane; ++i) s[i] = std::max(s[i], m.mask[i] * m.confidence);
    }
    LabelMap out(height, width, options.clutter_class);
    for (std::size_t i = 0; i < plane; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < options.num_classes; ++c) {
            if (scores[c * plane + i] > scores[best * plane + i]) best = c;
        }
        const double top = scores[best * plane + i];
        out.values[i] = top < options.clutter_max ? options.clutter_class : static_cast<std::int32_t>(best);
    }
    return out;
}

LabelMap majority_filter_3x3(const LabelMap& labels) {
    LabelMap out(labels.height, labels.width, 0);
    std::vector<std::pair<std::int32_t, int>> counts;
    for (std::size_t y = 0; y < labels.height; ++y) {
        for (std::size_t x = 0; x < labels.width; ++x) {
            counts.clear();
            const std::size_t y0 = y == 0 ? 0 : y - 1, y1 = std::min(y + 1, labels.height - 1);
            const std::size_t x0 = x == 0 ? 0 : x - 1, x1 = std::min(x + 1, labels.width - 1);
            for (std::size_t yy = y0; yy <= y1; ++yy) {
                for (std::size_t xx = x0; xx <= x1; ++xx) {
                    const auto l = labels(yy, xx);
                    auto it = std::find_if(counts.begin(), counts.end(), [l](const auto& c) { return c.first == l; });
                    if (it == counts.end()) {
                        counts.emplace_back(l, 1);
                    } else {
                        ++it->second;
                    }
                }
            }
            int top = 0;
            for (const auto& c : counts) top = std::max(top, c.second);
            const auto centre = labels(y, x);
            std::int32_t chosen = centre;
            bool centre_is_mode = false;
            std::int32_t lowest = std::numeric_limits<std::int32_t>::max();
            for (const auto& c : counts) {
                if (c.second != top) continue;
                centre_is_mode |= c.first == centre;
                lowest = std::min(lowest, c.first);
            }
            if (!centre_is_mode) chosen = lowest;
            out(y, x) = chosen;
        }
    }
    return out;
}

LabelMap instance_guided_refinement(const Tensor& fused_logits, const Tensor& view_original, const Tensor& view_shifted,
                                    std::size_t shift_px, const ProposalOptions& proposal, const DualViewOptions& dual) {
    auto masks = propose_instances(view_original, proposal);
    if (view_shifted.defined()) {
        for (auto& m : propose_instances(view_shifted, proposal)) {
            m.mask = geometry::unshift(m.mask, shift_px);
            m.source_view = SourceView::shifted;
            masks.push_back(std::move(m));
        }
    }
    return refine_semantics(fused_logits, select_dual_view(masks, dual));
}

}  // namespace panoseg::refinement
