#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "panoseg/numerics/tensor.hpp"

namespace panoseg::nn {

struct GradCheckOptions {
    double eps = 1e-5;
    // Coordinates probed per input; 0 probes every element. Probed
    // coordinates are drawn with `seed` when the limit is below the size.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
    // A step that straddles a ReLU or max kink gives a meaningless difference.
    // Coordinates whose error exceeds `retry_above` are re-probed with a step
    // scaled by `retry_scale` and keep the smaller error.
    double retry_above = 1e-6;
    double retry_scale = 1e-2;
};

// Compares reverse-mode gradients of sum(f(inputs)) against central
// differences, in f64. Returns max |analytic - numeric| / max(1, |numeric|).
// Inputs are perturbed in place and restored.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                  const GradCheckOptions& options = {});

}  // namespace panoseg::nn
