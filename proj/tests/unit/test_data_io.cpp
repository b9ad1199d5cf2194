#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "panoseg/checkpoint.hpp"
#include "panoseg/dataset.hpp"
#include "panoseg/encoder.hpp"
#include "panoseg/model.hpp"
#include "panoseg/ptns.hpp"
#include "panoseg/refinement.hpp"
#include "panoseg/render.hpp"

namespace fs = std::filesystem;
namespace data = panoseg::data;
namespace io = panoseg::io;
namespace nn = panoseg::nn;

namespace {

class TempDir {
   public:
    TempDir() : path_(fs::temp_directory_path() / ("panoseg_test_" + std::to_string(std::random_device{}()))) {
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

   private:
    fs::path path_;
};

std::size_t class_components(const panoseg::LabelMap& labels, std::int32_t cls) {
    panoseg::LabelMap binary(labels.height, labels.width);
    for (std::size_t i = 0; i < labels.size(); ++i) binary.values[i] = labels.values[i] == cls;
    const auto cc = panoseg::refinement::connected_components(binary);
    std::set<std::int32_t> ids;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (binary.values[i]) ids.insert(cc.values[i]);
    return ids.size();
}

std::vector<double> values(const nn::Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Ptns, HeaderArithmeticAndLayout) {
    TempDir dir;
    panoseg::LabelMap g(2, 3);
    for (std::size_t i = 0; i < 6; ++i) g.values[i] = static_cast<std::int32_t>(i * 1000);
    const auto path = dir.path() / "g.ptns";
    io::write_tensor(path, g, io::DType::u16);
    EXPECT_EQ(fs::file_size(path), 27u);
    const auto bytes = io::read_file(path);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PTNS");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[5], 1);
    EXPECT_EQ(bytes[6], 2);
    EXPECT_EQ(bytes[7], 2);
    EXPECT_EQ(bytes[11], 3);
    EXPECT_EQ(bytes[17], 1000 & 0xff);
    EXPECT_EQ(bytes[18], 1000 >> 8);
    EXPECT_EQ(io::read_grid(path), g);
}

TEST(Ptns, RoundTripIsByteIdentical) {
    std::mt19937 gen(21);
    for (auto dtype : {io::DType::f32, io::DType::u16, io::DType::u8}) {
        for (int trial = 0; trial < 30; ++trial) {
            nn::Shape dims;
            for (std::size_t d = 0, nd = 1 + gen() % 4; d < nd; ++d) dims.push_back(1 + gen() % 5);
            io::RawTensor t{dtype, {}, {}};
            for (auto d : dims) t.dims.push_back(static_cast<std::uint32_t>(d));
            t.payload.resize(t.numel() * io::dtype_size(dtype));
            for (auto& b : t.payload) b = static_cast<std::uint8_t>(gen());
            if (dtype == io::DType::f32)
                for (std::size_t i = 3; i < t.payload.size(); i += 4) t.payload[i] &= 0x3f;  // finite values
            const auto bytes = io::encode(t);
            std::size_t consumed = 0;
            const auto back = io::decode(bytes.data(), bytes.size(), &consumed);
            EXPECT_EQ(consumed, bytes.size());
            EXPECT_EQ(back.payload, t.payload);
            EXPECT_EQ(back.dims, t.dims);
            EXPECT_EQ(io::encode(back), bytes);
        }
    }
}

TEST(Ptns, DistinctErrors) {
    const auto bytes = io::encode(io::make_raw(io::DType::f32, {2, 2}, {1, 2, 3, 4}));
    EXPECT_THROW(io::decode(bytes.data(), bytes.size() - 1), io::TruncatedError);
    EXPECT_THROW(io::decode(bytes.data(), 6), io::TruncatedError);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(io::decode(bad.data(), bad.size()), io::BadMagicError);
    bad = bytes;
    bad[4] = 9;
    EXPECT_THROW(io::decode(bad.data(), bad.size()), io::BadVersionError);
    bad = bytes;
    bad[5] = 7;
    EXPECT_THROW(io::decode(bad.data(), bad.size()), io::FormatError);
    EXPECT_THROW(io::make_raw(io::DType::u8, {1}, {300}), io::FormatError);
}

TEST(Render, SeamObjectSplitsAndRollJoins) {
    data::SceneSpec spec;
    spec.boxes.push_back({{0.0, -0.8, 2.5}, {0.5, 0.7, 0.3}, data::kBookcase});
    const auto s = data::render_equirect(spec, 32, 64);
    EXPECT_EQ(s.labels(16, 0), data::kBookcase);
    EXPECT_EQ(s.labels(16, 63), data::kBookcase);
    EXPECT_EQ(class_components(s.labels, data::kBookcase), 2u);
    EXPECT_EQ(class_components(panoseg::roll_columns(s.labels, 32), data::kBookcase), 1u);
}

TEST(Render, EmptyRoomGeometry) {
    data::SceneSpec spec;
    spec.half_x = 3.0;
    spec.half_z = 2.0;
    const std::size_t h = 32, w = 64;
    const auto s = data::render_equirect(spec, h, w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const auto d = data::pixel_direction(i, j, h, w);
            double t = 1e300;
            for (int a : {0, 2}) {
                const double half = a == 0 ? spec.half_x : spec.half_z;
                if (d[a] != 0) t = std::min(t, half / std::abs(d[a]));
            }
            if (d[1] < 0) t = std::min(t, spec.camera_height / -d[1]);
            if (d[1] > 0) t = std::min(t, spec.ceiling_y() / d[1]);
            EXPECT_NEAR(s.depth.at({i, j}), t, 1e-5 * t);
            double norm = 0;
            for (std::size_t c = 0; c < 3; ++c) norm += s.normals.at({c, i, j}) * s.normals.at({c, i, j});
            EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-6);
            if (s.labels(i, j) == data::kFloor) {
                EXPECT_NEAR(s.normals.at({0, i, j}), 0.0, 1e-6);
                EXPECT_NEAR(std::abs(s.normals.at({1, i, j})), 1.0, 1e-6);
            }
        }
}

TEST(Render, DeterministicAndWrapConsistent) {
    const auto spec = data::random_scene(17, 32);
    const auto a = data::render_equirect(spec, 32, 64), b = data::render_equirect(spec, 32, 64);
    EXPECT_EQ(values(a.rgb), values(b.rgb));
    EXPECT_EQ(a.labels, b.labels);
    a.validate(data::kNumClasses);
    for (double d : values(a.depth)) EXPECT_GT(d, 0.0);
    for (std::ptrdiff_t s : {1, 13, 32}) {
        auto turned = spec;
        turned.yaw_columns = s;
        const auto r = data::render_equirect(turned, 32, 64);
        EXPECT_EQ(r.labels, panoseg::roll_columns(a.labels, s));
        EXPECT_EQ(r.instances, panoseg::roll_columns(a.instances, s));
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 64; ++j) {
                EXPECT_EQ(r.depth.at({i, j}), a.depth.at({i, (j + s) % 64}));
                EXPECT_EQ(r.rgb.at({0, i, j}), a.rgb.at({0, i, (j + s) % 64}));
            }
    }
}

TEST(Dataset, RoundTripManifestAndErrors) {
    TempDir dir;
    data::GenerateOptions opt;
    opt.samples = 4;
    opt.height = 16;
    opt.seed = 5;
    const auto m = data::generate_dataset(dir.path(), opt);
    EXPECT_EQ(m.train.size(), 3u);
    EXPECT_EQ(m.val.size(), 1u);
    EXPECT_EQ(m.k, data::kNumClasses);
    const auto again = data::read_manifest(dir.path());
    EXPECT_EQ(data::to_json(again), data::to_json(m));

    const auto train = data::read_split(dir.path(), m, "train", {true, true});
    std::vector<double> depths;
    for (const auto& s : train) {
        const auto d = values(s.depth);
        depths.insert(depths.end(), d.begin(), d.end());
    }
    EXPECT_EQ(panoseg::encoder::compute_d_t(depths), m.d_t);

    const auto first = data::render_equirect(data::random_scene(data::sample_seed(5, 0), 16), 16, 32);
    const auto& loaded = train[0];
    EXPECT_EQ(loaded.labels, first.labels);
    EXPECT_EQ(loaded.instances, first.instances);
    for (std::size_t i = 0; i < first.rgb.numel(); ++i)
        EXPECT_EQ(loaded.rgb.data()[i], static_cast<double>(static_cast<float>(first.rgb.data()[i])));

    fs::remove(dir.path() / m.train[1] / "depth.ptns");
    EXPECT_NO_THROW(data::read_sample(dir.path(), m.train[1]));
    EXPECT_THROW(data::read_sample(dir.path(), m.train[1], {true, false}), data::DataError);
    EXPECT_THROW(data::read_sample(dir.path(), "missing"), data::DataError);

    std::ofstream(dir.path() / "manifest.json") << R"({"classes": ["a"], "k": 2})";
    EXPECT_THROW(data::read_manifest(dir.path()), data::DataError);
}

TEST(Dataset, InstanceMaskRoundTrip) {
    TempDir dir;
    panoseg::Mask a(4, 8), b(4, 8);
    a(0, 0) = 1;
    b(3, 7) = b(2, 7) = 1;
    data::write_instance_masks(dir.path() / "inst", {panoseg::refinement::make_instance(a, 0.25),
                                                     panoseg::refinement::make_instance(b, 0.75)});
    const auto back = data::read_instance_masks(dir.path() / "inst");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].mask, a);
    EXPECT_EQ(back[1].mask, b);
    EXPECT_EQ(back[1].quality, 0.75);
    EXPECT_EQ(back[1].area, 2u);
}

TEST(Checkpoint, RoundTripAndMismatch) {
    TempDir dir;
    panoseg::ModelConfig cfg;
    const panoseg::SegModel a(cfg, 1), b(cfg, 2);
    const auto path = dir.path() / "ckpt.bin";
    io::save_checkpoint(path, a.parameters());
    io::load_checkpoint(path, b.parameters());
    EXPECT_EQ(io::encode_checkpoint(b.parameters()), io::encode_checkpoint(a.parameters()));
    auto other = cfg;
    other.use_branches = false;
    const panoseg::SegModel c(other, 1);
    EXPECT_THROW(io::load_checkpoint(path, c.parameters()), io::CheckpointMismatch);
    auto bytes = io::read_file(path);
    bytes.resize(bytes.size() / 2);
    io::write_file_atomic(path, bytes);
    EXPECT_THROW(io::load_checkpoint(path, b.parameters()), io::PtnsError);
}
