#include "panoseg/geometry.hpp"

#include <cmath>
#include <string>

#include "panoseg/numerics/ops.hpp"

namespace panoseg::geometry {

nn::Tensor roll_horizontal(const nn::Tensor& x, std::ptrdiff_t s) { return nn::roll(x, s, -1); }

ViewPair make_view_pair(const nn::Tensor& x) {
    const std::size_t w = x.dim(-1);
    if (w % 2 != 0) throw nn::ShapeError("make_view_pair: width " + std::to_string(w) + " is odd");
    const std::size_t s = w / 2;
    return {x, roll_horizontal(x, static_cast<std::ptrdiff_t>(s)), s};
}

nn::Tensor unshift(const nn::Tensor& x, std::size_t shift_px) {
    return roll_horizontal(x, -static_cast<std::ptrdiff_t>(shift_px));
}

EdgeBandMask edge_band_mask(std::size_t h, std::size_t w, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw std::invalid_argument("edge_band_mask: ratio must lie in (0, 1], got " + std::to_string(ratio));
    }
    const auto side = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(w) / 2.0));
    EdgeBandMask band{ratio, Mask(h, w, 0)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            band.mask(y, x) = 1;
            band.mask(y, w - 1 - x) = 1;
        }
    }
    return band;
}

Mask black_area_mask(const nn::Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw nn::ShapeError("black_area_mask: expects [3,h,w]");
    const std::size_t h = rgb.dim(1), w = rgb.dim(2), plane = h * w;
    const auto v = rgb.data();
    Mask m(h, w, 0);
    for (std::size_t i = 0; i < plane; ++i) {
        m.values[i] = v[i] < kBlackThreshold && v[plane + i] < kBlackThreshold && v[2 * plane + i] < kBlackThreshold;
    }
    return m;
}

}  // namespace panoseg::geometry
