#include "panoseg/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace panoseg::data {

namespace {

using Vec3 = std::array<double, 3>;

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal{};
    std::int32_t label = kWall;
    std::int32_t instance = 0;
};

void hit_room(const SceneSpec& s, const Vec3& d, Hit& hit) {
    auto plane = [&](double dir, double bound, std::size_t axis, std::int32_t label) {
        if (dir == 0.0 || (bound > 0) != (dir > 0)) return;
        const double t = bound / dir;
        if (t < hit.t) {
            hit.t = t;
            hit.normal = {0, 0, 0};
            hit.normal[axis] = bound > 0 ? -1.0 : 1.0;
            hit.label = label;
            hit.instance = 0;
        }
    };
    plane(d[0], d[0] > 0 ? s.half_x : -s.half_x, 0, kWall);
    plane(d[2], d[2] > 0 ? s.half_z : -s.half_z, 2, kWall);
    plane(d[1], d[1] > 0 ? s.ceiling_y() : s.floor_y(), 1, d[1] > 0 ? kCeiling : kFloor);
}

// Slab test from the origin; the camera is never inside a box.
void hit_box(const Box& b, std::int32_t instance, const Vec3& d, Hit& hit) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    std::size_t axis = 0;
    double sign = 1.0;
    for (std::size_t a = 0; a < 3; ++a) {
        const double lo = b.center[a] - b.half_size[a], hi = b.center[a] + b.half_size[a];
        if (d[a] == 0.0) {
            if (lo > 0.0 || hi < 0.0) return;
            continue;
        }
        double t0 = lo / d[a], t1 = hi / d[a];
        double face = -1.0;  // entering through the low face
        if (t0 > t1) {
            std::swap(t0, t1);
            face = 1.0;
        }
        if (t0 > t_near) {
            t_near = t0;
            axis = a;
            sign = face;
        }
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far || t_near <= 0.0 || t_near >= hit.t) return;
    hit.t = t_near;
    hit.normal = {0, 0, 0};
    hit.normal[axis] = sign;
    hit.label = b.class_id;
    hit.instance = instance;
}

// Deterministic per-instance colour offset in [-0.08, 0.08].
double instance_tint(std::int32_t instance, std::size_t channel) {
    std::uint64_t x = static_cast<std::uint64_t>(instance) * 0x9E3779B97F4A7C15ull + channel * 0xBF58476D1CE4E5B9ull;
    x ^= x >> 31;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 29;
    return (static_cast<double>(x % 1001) / 1000.0 - 0.5) * 0.16;
}

}  // namespace

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names{"wall", "floor", "ceiling", "table", "chair", "bookcase", "door", "clutter"};
    return names;
}

std::array<double, 3> class_color(std::int32_t class_id) {
    static const std::array<std::array<double, 3>, kNumClasses> colors{{
        {0.78, 0.76, 0.70},
        {0.45, 0.33, 0.22},
        {0.92, 0.92, 0.90},
        {0.85, 0.55, 0.10},
        {0.20, 0.35, 0.75},
        {0.55, 0.15, 0.20},
        {0.25, 0.55, 0.30},
        {0.70, 0.30, 0.70},
    }};
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= kNumClasses) throw std::invalid_argument("unknown class id");
    return colors[static_cast<std::size_t>(class_id)];
}

void SceneSpec::validate() const {
    if (!(half_x > 0 && half_z > 0 && height > 0)) throw std::invalid_argument("scene: room extents must be positive");
    if (!(camera_height > 0 && camera_height < height)) throw std::invalid_argument("scene: camera must be inside the room");
    if (noise_sigma < 0) throw std::invalid_argument("scene: negative noise");
    for (const auto& b : boxes) {
        if (b.class_id < 0 || static_cast<std::size_t>(b.class_id) >= kNumClasses) {
            throw std::invalid_argument("scene: box class out of range");
        }
        const Vec3 lo_room{-half_x, floor_y(), -half_z}, hi_room{half_x, ceiling_y(), half_z};
        bool contains_camera = true;
        for (std::size_t a = 0; a < 3; ++a) {
            if (!(b.half_size[a] > 0)) throw std::invalid_argument("scene: box sizes must be positive");
            const double lo = b.center[a] - b.half_size[a], hi = b.center[a] + b.half_size[a];
            if (lo < lo_room[a] - 1e-9 || hi > hi_room[a] + 1e-9) throw std::invalid_argument("scene: box leaves the room");
            contains_camera = contains_camera && lo <= 0.0 && hi >= 0.0;
        }
        if (contains_camera) throw std::invalid_argument("scene: box contains the camera");
    }
}

std::array<double, 3> pixel_direction(std::size_t i, std::size_t col, std::size_t h, std::size_t w) {
    const double phi = 2.0 * std::numbers::pi * (static_cast<double>(col) + 0.5) / static_cast<double>(w);
    const double theta = std::numbers::pi * (static_cast<double>(i) + 0.5) / static_cast<double>(h);
    return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

EquirectSample render_equirect(const SceneSpec& spec, std::size_t h, std::size_t w) {
    spec.validate();
    if (h == 0 || w != 2 * h) throw std::invalid_argument("render: width must be twice the height");
    if (spec.black_rows > h) throw std::invalid_argument("render: black band taller than the image");
    const std::size_t plane = h * w;

    // Noise is indexed by room azimuth column so yawed renders stay rolls of each other.
    std::vector<double> noise(3 * plane);
    nn::Rng rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& n : noise) n = spec.noise_sigma * gauss(rng);

    EquirectSample s;
    s.labels = LabelMap(h, w);
    s.instances = Grid<std::int32_t>(h, w);
    std::vector<double> rgb(3 * plane), depth(plane), normals(3 * plane);
    const auto iw = static_cast<std::ptrdiff_t>(w);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const auto col = static_cast<std::size_t>(((static_cast<std::ptrdiff_t>(j) + spec.yaw_columns) % iw + iw) % iw);
            const auto d = pixel_direction(i, col, h, w);
            Hit hit;
            hit_room(spec, d, hit);
            for (std::size_t b = 0; b < spec.boxes.size(); ++b) hit_box(spec.boxes[b], static_cast<std::int32_t>(b + 1), d, hit);

            const std::size_t p = i * w + j;
            depth[p] = hit.t;
            s.labels.values[p] = hit.label;
            s.instances.values[p] = hit.instance;
            const double shade = 0.65 + 0.35 * std::abs(hit.normal[0] * d[0] + hit.normal[1] * d[1] + hit.normal[2] * d[2]);
            const auto base = class_color(hit.label);
            const bool black = i >= h - spec.black_rows;
            for (std::size_t c = 0; c < 3; ++c) {
                normals[c * plane + p] = hit.normal[c];
                double v = base[c] * shade + noise[c * plane + i * w + col];
                if (hit.instance) v += instance_tint(hit.instance, c);
                rgb[c * plane + p] = black ? 0.0 : std::clamp(v, 0.0, 1.0);
            }
        }
    }
    nn::PrecisionScope exact(nn::Precision::f64);
    s.rgb = nn::Tensor::from_data({3, h, w}, std::move(rgb));
    s.depth = nn::Tensor::from_data({h, w}, std::move(depth));
    s.normals = nn::Tensor::from_data({3, h, w}, std::move(normals));
    return s;
}

SceneSpec random_scene(std::uint64_t seed, std::size_t h, const SceneOptions& opt) {
    nn::Rng rng(seed);
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    SceneSpec s;
    s.seed = seed ^ 0x5DEECE66Dull;
    s.half_x = uni(2.2, 3.2);
    s.half_z = uni(2.2, 3.2);
    s.height = uni(2.6, 3.2);
    s.camera_height = uni(1.3, 1.6);
    if (uni(0, 1) < opt.black_probability) s.black_rows = std::max<std::size_t>(1, h / 16);

    const std::size_t count = std::uniform_int_distribution<std::size_t>(opt.min_objects, opt.max_objects)(rng);
    const bool seam = uni(0, 1) < opt.seam_probability;
    static constexpr std::array<std::int32_t, 5> kObjectClasses{kTable, kChair, kBookcase, kDoor, kClutter};

    for (std::size_t n = 0; n < count; ++n) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            Box b;
            b.class_id = kObjectClasses[std::uniform_int_distribution<std::size_t>(0, kObjectClasses.size() - 1)(rng)];
            Vec3 half;
            switch (b.class_id) {
                case kTable: half = {uni(0.5, 0.9), uni(0.35, 0.4), uni(0.4, 0.6)}; break;
                case kChair: half = {uni(0.25, 0.35), uni(0.4, 0.5), uni(0.25, 0.35)}; break;
                case kBookcase: half = {uni(0.5, 0.8), uni(0.9, 1.1), uni(0.2, 0.3)}; break;
                case kDoor: half = {uni(0.45, 0.55), 1.05, 0.03}; break;
                default: half = {uni(0.2, 0.35), uni(0.15, 0.3), uni(0.2, 0.35)}; break;
            }
            half[1] = std::min(half[1], 0.5 * s.height - 0.01);
            const bool on_wall = b.class_id == kBookcase || b.class_id == kDoor;
            // Azimuth of the object: pinned to the seam for the first object when requested.
            const double psi = (seam && n == 0) ? 0.0 : uni(0.0, 2.0 * std::numbers::pi);
            const double dx = std::sin(psi), dz = std::cos(psi);
            Vec3 c;
            if (on_wall) {
                // Attach to the wall hit first along psi, facing the room.
                const double tx = dx != 0 ? s.half_x / std::abs(dx) : 1e9;
                const double tz = dz != 0 ? s.half_z / std::abs(dz) : 1e9;
                if (tx < tz) {
                    std::swap(half[0], half[2]);
                    c = {std::copysign(s.half_x - half[0], dx), 0.0, std::clamp(dz * tx, -s.half_z + half[2], s.half_z - half[2])};
                } else {
                    c = {std::clamp(dx * tz, -s.half_x + half[0], s.half_x - half[0]), 0.0, std::copysign(s.half_z - half[2], dz)};
                }
            } else {
                const double reach = std::min(s.half_x / std::max(std::abs(dx), 1e-9), s.half_z / std::max(std::abs(dz), 1e-9));
                const double r = uni(1.0, std::max(1.1, reach - 0.5));
                c = {std::clamp(dx * r, -s.half_x + half[0], s.half_x - half[0]), 0.0,
                     std::clamp(dz * r, -s.half_z + half[2], s.half_z - half[2])};
            }
            c[1] = s.floor_y() + half[1];
            b.center = c;
            b.half_size = half;
            SceneSpec trial = s;
            trial.boxes.push_back(b);
            try {
                trial.validate();
            } catch (const std::invalid_argument&) {
                continue;
            }
            s.boxes.push_back(b);
            break;
        }
    }
    return s;
}

}  // namespace panoseg::data
