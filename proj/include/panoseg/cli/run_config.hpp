#pragma once

// Parameters of a training run. Parsed strictly from JSON and echoed into the
// output directory so a run can be reproduced from config.json and its seed.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "panoseg/losses.hpp"
#include "panoseg/model.hpp"

namespace panoseg::cli {

struct RunConfig {
    std::string data_dir;
    std::string out_dir;
    ModelConfig model;
    std::size_t epochs = 30;
    double lr = 5e-4;
    std::uint64_t seed = 0;
    train::LossMode loss = train::LossMode::alternating;
    std::size_t loss_period = 1;  // epochs per phase of the alternating schedule
    std::size_t batch_size = 1;
    bool augment = true;
    bool freeze_encoder = false;
    double aux_weight = 0.0;
    bool f64 = false;  // 64-bit arithmetic throughout
    double d_t = 0.0;  // filled from the dataset manifest at train time
};

nlohmann::json to_json(const RunConfig& cfg);
// Throws std::invalid_argument on unknown keys or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig read_run_config(const std::filesystem::path& path);
void write_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace panoseg::cli
