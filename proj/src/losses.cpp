#include "panoseg/losses.hpp"

#include <stdexcept>
#include <vector>

#include "panoseg/numerics/ops.hpp"

namespace panoseg::train {

using nn::Tensor;

namespace {

struct Encoded {
    Tensor one_hot;  // [b,K,h,w]
    Tensor valid;    // [b,1,h,w]
    std::vector<double> class_pixels;
    std::size_t valid_count = 0;
};

Encoded encode_target(const Tensor& logits, const LossTarget& target) {
    if (logits.rank() != 4) throw nn::ShapeError("loss: expected logits [b,K,h,w], got " + nn::to_string(logits.shape()));
    const std::size_t b = logits.dim(0), k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
    if (target.labels.size() != b * plane) throw nn::ShapeError("loss: label count does not match logits");
    if (!target.ignore.empty() && target.ignore.size() != b * plane) {
        throw nn::ShapeError("loss: ignore mask size does not match logits");
    }
    Encoded e;
    e.class_pixels.assign(k, 0.0);
    std::vector<double> hot(b * k * plane, 0.0), valid(b * plane, 0.0);
    for (std::size_t n = 0; n < b; ++n) {
        for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t p = n * plane + i;
            if (!target.ignore.empty() && target.ignore[p]) continue;
            const auto label = target.labels[p];
            if (label < 0 || static_cast<std::size_t>(label) >= k) throw std::invalid_argument("loss: label out of range");
            hot[(n * k + static_cast<std::size_t>(label)) * plane + i] = 1.0;
            valid[p] = 1.0;
            e.class_pixels[static_cast<std::size_t>(label)] += 1.0;
            ++e.valid_count;
        }
    }
    if (e.valid_count == 0) throw std::invalid_argument("loss: every pixel is ignored");
    e.one_hot = Tensor::from_data(logits.shape(), std::move(hot));
    e.valid = Tensor::from_data({b, 1, logits.dim(2), logits.dim(3)}, std::move(valid));
    return e;
}

}  // namespace

Tensor jaccard_loss(const Tensor& logits, const LossTarget& target) {
    const auto e = encode_target(logits, target);
    const std::size_t k = logits.dim(1);
    const Tensor p = nn::softmax(logits, 1) * e.valid;
    const Tensor inter = nn::reduce(nn::ReduceOp::sum, p * e.one_hot, {0, 2, 3});
    const Tensor psum = nn::reduce(nn::ReduceOp::sum, p, {0, 2, 3});
    const Tensor gsum = Tensor::from_data({k}, e.class_pixels);
    const Tensor per_class = 1.0 - (inter + kJaccardEps) / (psum + gsum - inter + kJaccardEps);

    std::vector<double> present(k, 0.0);
    double count = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        if (e.class_pixels[c] > 0.0) {
            present[c] = 1.0;
            count += 1.0;
        }
    }
    return nn::sum(per_class * Tensor::from_data({k}, std::move(present))) / count;
}

Tensor cross_entropy_loss(const Tensor& logits, const LossTarget& target) {
    const auto e = encode_target(logits, target);
    const Tensor picked = nn::sum(nn::log_softmax(logits, 1) * e.one_hot);
    return -picked / static_cast<double>(e.valid_count);
}

std::string to_string(LossMode m) {
    switch (m) {
        case LossMode::jaccard: return "jaccard";
        case LossMode::cross_entropy: return "ce";
        case LossMode::alternating: return "alternating";
    }
    return "?";
}

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "jaccard") return LossMode::jaccard;
    if (s == "ce" || s == "cross_entropy") return LossMode::cross_entropy;
    if (s == "alternating") return LossMode::alternating;
    throw std::invalid_argument("unknown loss '" + s + "' (expected jaccard, ce or alternating)");
}

LossMode LossSchedule::active(std::size_t epoch) const {
    if (period == 0) throw std::invalid_argument("loss schedule: period must be >= 1");
    if (mode != LossMode::alternating) return mode;
    return (epoch / period) % 2 == 0 ? LossMode::cross_entropy : LossMode::jaccard;
}

Tensor scheduled_loss(std::size_t epoch, const LossSchedule& schedule, const Tensor& logits, const LossTarget& target) {
    return schedule.active(epoch) == LossMode::jaccard ? jaccard_loss(logits, target) : cross_entropy_loss(logits, target);
}

}  // namespace panoseg::train
