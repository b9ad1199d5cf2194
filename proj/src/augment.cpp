#include "panoseg/augment.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace panoseg::train {

using nn::Tensor;

namespace {

// out[..., j] = in[..., src(j)] over the last dim, planes untouched otherwise.
template <class F>
std::vector<double> remap_columns(std::span<const double> in, std::size_t width, F src) {
    std::vector<double> out(in.size());
    for (std::size_t row = 0; row < in.size() / width; ++row) {
        for (std::size_t j = 0; j < width; ++j) out[row * width + j] = in[row * width + src(j)];
    }
    return out;
}

template <class T, class F>
Grid<T> remap_grid(const Grid<T>& g, F src) {
    Grid<T> out(g.height, g.width);
    for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) out(y, x) = g(y, src(x));
    return out;
}

}  // namespace

AugmentDraw draw_augment(std::size_t width, nn::Rng& rng, const AugmentOptions& opt) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    AugmentDraw d;
    d.flip = u(rng) < opt.flip_probability;
    if (opt.roll) d.roll = std::uniform_int_distribution<std::size_t>(0, width - 1)(rng);
    if (u(rng) < opt.color_permutation_probability) {
        // Uniform over all six orders, drawn by index so the result does not
        // depend on the standard library's shuffle.
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, 5)(rng);
        std::array<std::size_t, 3> order{0, 1, 2};
        for (std::size_t i = 0; i < pick; ++i) std::next_permutation(order.begin(), order.end());
        d.rgb_order = order;
    }
    return d;
}

EquirectSample apply_augment(const EquirectSample& sample, const AugmentDraw& draw) {
    const std::size_t w = sample.width();
    auto src = [&](std::size_t j) {
        const std::size_t rolled = (j + draw.roll) % w;
        return draw.flip ? w - 1 - rolled : rolled;
    };
    auto tensor = [&](const Tensor& t) {
        if (!t.defined()) return t;
        return Tensor::from_data(t.shape(), remap_columns(t.data(), w, src));
    };

    EquirectSample out;
    out.id = sample.id;
    out.depth = tensor(sample.depth);
    out.labels = remap_grid(sample.labels, src);
    out.instances = remap_grid(sample.instances, src);

    const std::size_t plane = sample.height() * w;
    auto rgb = remap_columns(sample.rgb.data(), w, src);
    std::vector<double> permuted(rgb.size());
    for (std::size_t c = 0; c < 3; ++c) {
        std::copy_n(rgb.begin() + static_cast<std::ptrdiff_t>(draw.rgb_order[c] * plane), plane,
                    permuted.begin() + static_cast<std::ptrdiff_t>(c * plane));
    }
    out.rgb = Tensor::from_data(sample.rgb.shape(), std::move(permuted));

    if (sample.normals.defined()) {
        auto n = remap_columns(sample.normals.data(), w, src);
        if (draw.flip) {
            for (std::size_t i = 0; i < plane; ++i) n[i] = -n[i];
        }
        out.normals = Tensor::from_data(sample.normals.shape(), std::move(n));
    }
    return out;
}

EquirectSample augment(const EquirectSample& sample, nn::Rng& rng, const AugmentOptions& opt) {
    return apply_augment(sample, draw_augment(sample.width(), rng, opt));
}

}  // namespace panoseg::train
