#include "panoseg/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "panoseg/geometry.hpp"
#include "panoseg/numerics/ops.hpp"
#include "panoseg/optimizer.hpp"

namespace panoseg::train {

using nn::Tensor;

encoder::ModalityBundle sample_inputs(const EquirectSample& sample, const std::vector<encoder::Modality>& modalities,
                                      double d_t) {
    for (auto m : modalities) {
        if (m == encoder::Modality::depth && !sample.depth.defined()) {
            throw std::invalid_argument("sample " + sample.id + " has no depth map");
        }
        if (m == encoder::Modality::normals && !sample.normals.defined()) {
            throw std::invalid_argument("sample " + sample.id + " has no normal map");
        }
    }
    return encoder::pack_modalities(sample.rgb, sample.depth, sample.normals, modalities, d_t);
}

Mask ignore_mask(const EquirectSample& sample) { return geometry::black_area_mask(sample.rgb); }

Tensor sample_loss(const ForwardResult& out, const EquirectSample& sample, LossMode mode, double aux_weight) {
    const Mask ignore = ignore_mask(sample);
    const LossTarget target{sample.labels.values, ignore.values};
    auto loss_of = [&](const Tensor& logits) {
        return mode == LossMode::jaccard ? jaccard_loss(logits, target) : cross_entropy_loss(logits, target);
    };
    Tensor loss = loss_of(out.fused);
    if (aux_weight > 0.0 && out.view_shifted.defined()) {
        loss = loss + aux_weight * (loss_of(out.view_original) + loss_of(out.view_shifted));
    }
    return loss;
}

TrainHistory train_model(SegModel& model, const std::vector<EquirectSample>& samples, double d_t,
                         const TrainOptions& options) {
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    if (options.batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
    nn::Rng rng(options.seed);
    Adam adam(model.trainable_parameters(options.freeze_encoder));
    TrainHistory history;
    std::vector<std::size_t> order(samples.size());

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        // Fisher-Yates with explicit draws keeps the order library-independent.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
        }
        const LossMode mode = options.loss.active(epoch);
        double total = 0.0;
        std::size_t pending = 0;
        adam.zero_grad();
        for (std::size_t n = 0; n < order.size(); ++n) {
            const auto& base = samples[order[n]];
            const EquirectSample sample = options.augment ? augment(base, rng, options.augment_options) : base;
            const auto out = model.forward(sample_inputs(sample, model.config().modalities, d_t));
            const Tensor loss = sample_loss(out, sample, mode, options.aux_weight);
            total += loss.item();
            (loss / static_cast<double>(options.batch_size)).backward();
            if (++pending == options.batch_size || n + 1 == order.size()) {
                adam.step(options.lr);
                adam.zero_grad();
                pending = 0;
                ++history.steps;
            }
        }
        EpochStats stats{epoch, total / static_cast<double>(samples.size()), mode};
        history.epochs.push_back(stats);
        if (options.on_epoch) options.on_epoch(stats);
    }
    return history;
}

Prediction predict(const SegModel& model, const EquirectSample& sample, double d_t, bool single_view, bool refine,
                   const refinement::ProposalOptions& proposal, const refinement::DualViewOptions& dual) {
    nn::NoGradGuard guard;
    Prediction p;
    p.logits = model.forward(sample_inputs(sample, model.config().modalities, d_t), single_view);
    p.labels = refinement::argmax_labels(p.logits.fused);
    if (refine) {
        const auto& r = p.logits;
        Tensor shifted_raw;
        if (r.view_shifted.defined()) shifted_raw = nn::slice(r.raw_logits, 0, 1, 1);
        p.refined = refinement::instance_guided_refinement(r.fused, r.view_original, shifted_raw, sample.width() / 2,
                                                           proposal, dual);
    }
    return p;
}

EvalResult evaluate(const SegModel& model, const std::vector<EquirectSample>& samples, double d_t,
                    const EvalOptions& options) {
    const std::size_t k = model.config().num_classes;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return samples[a].id < samples[b].id; });

    const std::size_t n_ratios = options.edge_ratios.size();
    ConfusionCounts global(k), refined(k);
    std::vector<ConfusionCounts> edges(n_ratios, ConfusionCounts(k)), refined_edges(n_ratios, ConfusionCounts(k));
    for (auto i : order) {
        const auto& s = samples[i];
        const auto p = predict(model, s, d_t, options.single_view, options.refine);
        const Mask ignore = ignore_mask(s);
        global.add(p.labels, s.labels, &ignore);
        if (p.refined) refined.add(*p.refined, s.labels, &ignore);
        for (std::size_t r = 0; r < n_ratios; ++r) {
            const auto band = geometry::edge_band_mask(s.height(), s.width(), options.edge_ratios[r]);
            edges[r].add(p.labels, s.labels, &ignore, &band.mask);
            if (p.refined) refined_edges[r].add(*p.refined, s.labels, &ignore, &band.mask);
        }
    }
    EvalResult result;
    result.global = make_report(global);
    for (std::size_t r = 0; r < n_ratios; ++r) result.edges.push_back({options.edge_ratios[r], make_report(edges[r])});
    if (options.refine) {
        result.refined_global = make_report(refined);
        for (std::size_t r = 0; r < n_ratios; ++r) {
            result.refined_edges.push_back({options.edge_ratios[r], make_report(refined_edges[r])});
        }
    }
    return result;
}

}  // namespace panoseg::train
