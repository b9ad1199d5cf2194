#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "panoseg/numerics/tensor.hpp"

namespace panoseg::train {

// Per-pixel targets for logits[b,K,h,w], flattened as (b, y, x).
// `ignore` is either empty or has one entry per pixel (nonzero = ignored).
struct LossTarget {
    std::span<const std::int32_t> labels;
    std::span<const std::uint8_t> ignore;
};

inline constexpr double kJaccardEps = 1e-7;

// Soft Jaccard over softmax probabilities, averaged over classes with at
// least one labelled pixel. Throws std::invalid_argument if all pixels are ignored.
nn::Tensor jaccard_loss(const nn::Tensor& logits, const LossTarget& target);

// Mean negative log-likelihood over non-ignored pixels.
nn::Tensor cross_entropy_loss(const nn::Tensor& logits, const LossTarget& target);

enum class LossMode { jaccard, cross_entropy, alternating };

std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);  // "jaccard" | "ce" | "alternating"

struct LossSchedule {
    LossMode mode = LossMode::alternating;
    std::size_t period = 1;  // epochs

    // Cross-entropy when floor(epoch / period) is even, Jaccard otherwise.
    LossMode active(std::size_t epoch) const;
};

nn::Tensor scheduled_loss(std::size_t epoch, const LossSchedule& schedule, const nn::Tensor& logits,
                          const LossTarget& target);

}  // namespace panoseg::train
