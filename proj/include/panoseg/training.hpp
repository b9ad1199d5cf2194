#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "panoseg/augment.hpp"
#include "panoseg/losses.hpp"
#include "panoseg/metrics.hpp"
#include "panoseg/model.hpp"
#include "panoseg/refinement.hpp"
#include "panoseg/sample.hpp"

namespace panoseg::train {

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    LossMode loss = LossMode::jaccard;
};

struct TrainOptions {
    std::size_t epochs = 30;
    double lr = 5e-4;
    LossSchedule loss;
    std::size_t batch_size = 1;  // gradient accumulation over this many samples
    bool augment = true;
    AugmentOptions augment_options;
    bool freeze_encoder = false;
    double aux_weight = 0.0;  // per-view auxiliary loss, dual-view only
    std::uint64_t seed = 0;
    std::function<void(const EpochStats&)> on_epoch;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::size_t steps = 0;
};

// Encoder-ready inputs for one sample.
encoder::ModalityBundle sample_inputs(const EquirectSample& sample, const std::vector<encoder::Modality>& modalities,
                                      double d_t);

// Black-area pixels are ignored by the loss and the metrics.
Mask ignore_mask(const EquirectSample& sample);

nn::Tensor sample_loss(const ForwardResult& out, const EquirectSample& sample, LossMode mode, double aux_weight = 0.0);

TrainHistory train_model(SegModel& model, const std::vector<EquirectSample>& samples, double d_t,
                         const TrainOptions& options);

struct Prediction {
    LabelMap labels;
    std::optional<LabelMap> refined;
    ForwardResult logits;
};

Prediction predict(const SegModel& model, const EquirectSample& sample, double d_t, bool single_view, bool refine,
                   const refinement::ProposalOptions& proposal = {}, const refinement::DualViewOptions& dual = {});

struct EvalOptions {
    bool single_view = false;
    bool refine = false;
    std::vector<double> edge_ratios{0.1, 0.3, 0.5};
};

struct EvalResult {
    MetricReport global;
    std::vector<EdgeReport> edges;
    std::optional<MetricReport> refined_global;
    std::vector<EdgeReport> refined_edges;
};

// Metrics accumulated over all samples in id order.
EvalResult evaluate(const SegModel& model, const std::vector<EquirectSample>& samples, double d_t,
                    const EvalOptions& options);

}  // namespace panoseg::train
