#pragma once

// On-disk dataset: one directory per sample holding rgb/depth/normals/
// labels/instances .ptns files, plus a dataset-level manifest.json.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "panoseg/encoder.hpp"
#include "panoseg/refinement.hpp"
#include "panoseg/render.hpp"
#include "panoseg/sample.hpp"

namespace panoseg::data {

// Missing files, inconsistent shapes, or a malformed manifest.
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct Manifest {
    std::vector<std::string> classes;
    std::size_t k = 0;
    double d_t = 0.0;
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::size_t height = 0;
    std::size_t width = 0;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& dir, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& dir);

// Writes dir/<sample.id>/ through a temporary directory and a rename.
void write_sample(const std::filesystem::path& dir, const EquirectSample& sample);

struct ReadOptions {
    bool need_depth = false;
    bool need_normals = false;
};

ReadOptions read_options_for(const std::vector<encoder::Modality>& modalities);

// rgb and labels are required; depth/normals/instances are loaded when present.
EquirectSample read_sample(const std::filesystem::path& dir, const std::string& id, const ReadOptions& opt = {});

std::vector<EquirectSample> read_split(const std::filesystem::path& dir, const Manifest& m, const std::string& split,
                                       const ReadOptions& opt = {});

struct GenerateOptions {
    std::size_t samples = 32;
    std::size_t height = 64;
    std::uint64_t seed = 0;
    SceneOptions scene;
};

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);
std::string sample_id(std::size_t index);
// The first ceil(3n/4) ids.
std::size_t train_count(std::size_t n);

// Renders and writes all samples, computes d_t over the training split and
// writes the manifest.
Manifest generate_dataset(const std::filesystem::path& dir, const GenerateOptions& opt);

// Instance masks as stacked u8 planes [n,h,w] plus a JSON list of qualities.
void write_instance_masks(const std::filesystem::path& stem, const std::vector<refinement::InstanceMask>& masks);
std::vector<refinement::InstanceMask> read_instance_masks(const std::filesystem::path& stem);

}  // namespace panoseg::data
