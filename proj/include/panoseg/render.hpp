#pragma once

// Ray-cast equirectangular renderer for box-furnished rectangular rooms.
// The camera sits at the origin, y points up, and azimuth 0 looks along +z;
// the image seam (column 0 / column w-1) is centred on azimuth 0.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "panoseg/sample.hpp"

namespace panoseg::data {

inline constexpr std::int32_t kWall = 0, kFloor = 1, kCeiling = 2, kTable = 3, kChair = 4, kBookcase = 5, kDoor = 6,
                              kClutter = 7;
inline constexpr std::size_t kNumClasses = 8;

const std::vector<std::string>& class_names();
// Base colour per class id.
std::array<double, 3> class_color(std::int32_t class_id);

struct Box {
    std::array<double, 3> center{};
    std::array<double, 3> half_size{};
    std::int32_t class_id = kTable;
};

struct SceneSpec {
    double half_x = 4.0;  // walls at x = +-half_x, z = +-half_z
    double half_z = 4.0;
    double height = 3.0;  // floor to ceiling
    double camera_height = 1.5;
    std::vector<Box> boxes;  // instance id = index + 1
    std::uint64_t seed = 0;  // rgb noise
    double noise_sigma = 0.02;
    // Camera yaw in whole image columns: rendering with yaw s equals the
    // yaw-0 image rolled by s.
    std::ptrdiff_t yaw_columns = 0;
    std::size_t black_rows = 0;  // bottom rows painted black (missing capture)

    double floor_y() const { return -camera_height; }
    double ceiling_y() const { return height - camera_height; }
    // Throws std::invalid_argument.
    void validate() const;
};

// Unit viewing direction of pixel (i, col) for an h x w panorama.
std::array<double, 3> pixel_direction(std::size_t i, std::size_t col, std::size_t h, std::size_t w);

// Normals are expressed in the room frame (the yaw-0 camera frame).
EquirectSample render_equirect(const SceneSpec& spec, std::size_t h, std::size_t w);

struct SceneOptions {
    double seam_probability = 0.5;  // place one object centred on the seam
    std::size_t min_objects = 3;
    std::size_t max_objects = 6;
    double black_probability = 0.25;  // chance of a black band at the bottom
};

SceneSpec random_scene(std::uint64_t seed, std::size_t h, const SceneOptions& opt = {});

}  // namespace panoseg::data
