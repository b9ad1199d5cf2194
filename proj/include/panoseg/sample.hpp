#pragma once

#include <string>

#include "panoseg/grid.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg {

// One panorama with aligned per-pixel maps.
struct EquirectSample {
    std::string id;
    nn::Tensor rgb;      // [3,h,w] in [0,1]
    nn::Tensor depth;    // [h,w] meters, may be undefined when not loaded
    nn::Tensor normals;  // [3,h,w] unit vectors, may be undefined when not loaded
    LabelMap labels;
    Grid<std::int32_t> instances;  // 0 = background

    std::size_t height() const { return labels.height; }
    std::size_t width() const { return labels.width; }

    // Checks shared dims, w == 2h, labels < num_classes and that every
    // instance id maps to a single class. Throws std::invalid_argument.
    void validate(std::size_t num_classes) const;
};

}  // namespace panoseg
