#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "panoseg/numerics/tensor.hpp"

namespace panoseg::nn {

// Ordered (name, tensor) list; tensors share storage with the owning module.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), trainable.
inline Tensor init_weight(Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -bound, bound, true);
}

inline Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
inline Tensor init_ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

inline std::size_t parameter_count(const NamedParams& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

}  // namespace panoseg::nn
