#pragma once

#include <array>
#include <cstddef>

#include "panoseg/numerics/tensor.hpp"
#include "panoseg/sample.hpp"

namespace panoseg::train {

struct AugmentOptions {
    double flip_probability = 0.5;
    bool roll = true;
    double color_permutation_probability = 0.5;
};

// The concrete transform drawn for one sample.
struct AugmentDraw {
    bool flip = false;
    std::size_t roll = 0;  // columns, out[j] = in[(j + roll) mod w]
    std::array<std::size_t, 3> rgb_order{0, 1, 2};
};

AugmentDraw draw_augment(std::size_t width, nn::Rng& rng, const AugmentOptions& opt = {});

// Mirror, then roll, applied identically to every map; the RGB permutation
// touches rgb only. Mirroring negates the x component of the normals.
EquirectSample apply_augment(const EquirectSample& sample, const AugmentDraw& draw);

EquirectSample augment(const EquirectSample& sample, nn::Rng& rng, const AugmentOptions& opt = {});

}  // namespace panoseg::train
