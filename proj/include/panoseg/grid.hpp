#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace panoseg {

// Row-major 2-D map of per-pixel values (labels, masks, instance ids).
template <class T>
struct Grid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> values;

    Grid() = default;
    Grid(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), values(h * w, fill) {}

    T& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
    const T& operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::size_t size() const { return values.size(); }
    template <class U>
    bool same_dims(const Grid<U>& other) const { return height == other.height && width == other.width; }

    friend bool operator==(const Grid&, const Grid&) = default;
};

using Mask = Grid<std::uint8_t>;
using LabelMap = Grid<std::int32_t>;

template <class T>
Grid<T> roll_columns(const Grid<T>& g, std::ptrdiff_t shift) {
    Grid<T> out(g.height, g.width);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    const auto s = static_cast<std::size_t>(((shift % w) + w) % w);
    for (std::size_t y = 0; y < g.height; ++y)
        for (std::size_t x = 0; x < g.width; ++x) out(y, x) = g(y, (x + s) % g.width);
    return out;
}

}  // namespace panoseg
