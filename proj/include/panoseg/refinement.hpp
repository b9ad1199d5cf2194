#pragma once

// Instance-guided semantic refinement: connected-component instance
// proposals, mask NMS across modalities and views, majority-vote relabeling,
// and scored-mask fusion with clutter handling and 3x3 majority filtering.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "panoseg/grid.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::refinement {

enum class SourceView { original, shifted };

struct InstanceMask {
    Mask mask;
    double quality = 0.0;  // predicted-IoU surrogate in [0,1]
    std::size_t area = 0;
    std::string source_modality = "rgb";
    SourceView source_view = SourceView::original;
};

InstanceMask make_instance(Mask mask, double quality, std::string modality = "rgb",
                           SourceView view = SourceView::original);

// Per-pixel argmax over the class axis of logits[K,h,w] (or [1,K,h,w]);
// ties go to the lowest class id.
LabelMap argmax_labels(const nn::Tensor& logits);

// 4-connected components of a label map; component ids start at 1.
Grid<std::int32_t> connected_components(const LabelMap& labels, std::size_t* count = nullptr);

struct ProposalOptions {
    std::size_t min_area = 16;
};

// Components of argmax(logits); quality is the mean max-softmax probability
// over the component. Components below min_area are dropped.
std::vector<InstanceMask> propose_instances(const nn::Tensor& logits, const ProposalOptions& options = {});

double mask_iou(const InstanceMask& a, const InstanceMask& b);
double mask_iou(const Mask& a, const Mask& b);

// Sort by quality (desc), then area (desc), then input order; keep a mask
// iff its IoU with every kept mask is below the threshold.
std::vector<InstanceMask> greedy_mask_nms(std::vector<InstanceMask> masks, double iou_threshold = 0.5);

struct DualViewOptions {
    double iou_threshold = 0.5;
    double quality_margin = 0.02;
};

// Resolves overlapping original/shifted pairs (shifted masks must already be
// in original coordinates), then runs greedy NMS over the survivors.
std::vector<InstanceMask> select_dual_view(const std::vector<InstanceMask>& masks, const DualViewOptions& options = {});

// Starting from argmax(logits), each instance (highest quality first) claims
// its not-yet-claimed pixels and sets them to the modal initial label inside
// the whole instance.
LabelMap refine_semantics(const nn::Tensor& logits, const std::vector<InstanceMask>& instances);
LabelMap refine_semantics(const LabelMap& initial, const std::vector<InstanceMask>& instances);

struct ScoredClassMask {
    std::vector<double> mask;  // h*w mask scores m_i
    std::size_t height = 0;
    std::size_t width = 0;
    double confidence = 0.0;  // sigma_i in [0,1]
    std::int32_t class_id = 0;
};

struct ScoreFusionOptions {
    double conf_min = 0.25;
    double clutter_max = 0.05;
    std::int32_t clutter_class = 7;
    std::size_t num_classes = 8;
};

// s_c = max_i m_i * sigma_i over retained masks of class c (0 when none);
// label = argmax_c s_c, or clutter where the best score is below clutter_max.
LabelMap fuse_open_vocab_scores(const std::vector<ScoredClassMask>& masks, std::size_t height, std::size_t width,
                                const ScoreFusionOptions& options = {});

// Modal label of the border-clipped 3x3 neighbourhood. Ties keep the centre
// label when it is among the modes, else the lowest id.
LabelMap majority_filter_3x3(const LabelMap& labels);

// Proposal, dual-view selection and majority refinement over a forward pass.
// Shifted-view proposals are made in the shifted frame, where seam objects
// are whole, and unshifted before selection. `view_shifted` may be undefined.
LabelMap instance_guided_refinement(const nn::Tensor& fused_logits, const nn::Tensor& view_original,
                                    const nn::Tensor& view_shifted, std::size_t shift_px,
                                    const ProposalOptions& proposal = {}, const DualViewOptions& dual = {});

}  // namespace panoseg::refinement
