#pragma once

// Equirectangular helpers: column rolls between the original and the
// half-turn shifted view, border band masks, and black-area masks.

#include <cstddef>

#include "panoseg/grid.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::geometry {

// out[..., j] = x[..., (j + s) mod w]; negative s allowed.
nn::Tensor roll_horizontal(const nn::Tensor& x, std::ptrdiff_t s);

struct ViewPair {
    nn::Tensor original;
    nn::Tensor shifted;  // roll_horizontal(original, shift_px)
    std::size_t shift_px = 0;
};

// Pairs x with its copy rolled by half the width. Width must be even.
ViewPair make_view_pair(const nn::Tensor& x);

// Undoes a roll by shift_px.
nn::Tensor unshift(const nn::Tensor& x, std::size_t shift_px);

template <class T>
Grid<T> unshift(const Grid<T>& g, std::size_t shift_px) {
    return roll_columns(g, -static_cast<std::ptrdiff_t>(shift_px));
}

struct EdgeBandMask {
    double ratio = 1.0;
    Mask mask;  // 1 inside the left and right bands
};

// Each side gets floor(ratio * w / 2) columns; ratio in (0, 1].
EdgeBandMask edge_band_mask(std::size_t h, std::size_t w, double ratio);

inline constexpr double kBlackThreshold = 1.0 / 255.0;

// 1 where every channel of rgb[3,h,w] is below 1/255.
Mask black_area_mask(const nn::Tensor& rgb);

}  // namespace panoseg::geometry
