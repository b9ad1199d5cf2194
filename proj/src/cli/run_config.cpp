#include "panoseg/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "panoseg/ptns.hpp"

namespace panoseg::cli {

using nlohmann::json;

json to_json(const RunConfig& c) {
    return json{
        {"data_dir", c.data_dir},
        {"out_dir", c.out_dir},
        {"model", panoseg::to_json(c.model)},
        {"epochs", c.epochs},
        {"lr", c.lr},
        {"seed", c.seed},
        {"loss", train::to_string(c.loss)},
        {"loss_period", c.loss_period},
        {"batch_size", c.batch_size},
        {"augment", c.augment},
        {"freeze_encoder", c.freeze_encoder},
        {"aux_weight", c.aux_weight},
        {"f64", c.f64},
        {"d_t", c.d_t},
    };
}

RunConfig run_config_from_json(const json& j) {
    static const std::set<std::string> allowed{"data_dir",   "out_dir",    "model",          "epochs",     "lr",
                                               "seed",       "loss",       "loss_period",    "batch_size", "augment",
                                               "freeze_encoder", "aux_weight", "f64",        "d_t"};
    if (!j.is_object()) throw std::invalid_argument("run config: expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!allowed.contains(k)) throw std::invalid_argument("run config: unknown key '" + k + "'");
    }
    RunConfig c;
    try {
        c.data_dir = j.value("data_dir", c.data_dir);
        c.out_dir = j.value("out_dir", c.out_dir);
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
        c.epochs = j.value("epochs", c.epochs);
        c.lr = j.value("lr", c.lr);
        c.seed = j.value("seed", c.seed);
        if (j.contains("loss")) c.loss = train::loss_mode_from_string(j.at("loss").get<std::string>());
        c.loss_period = j.value("loss_period", c.loss_period);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.augment = j.value("augment", c.augment);
        c.freeze_encoder = j.value("freeze_encoder", c.freeze_encoder);
        c.aux_weight = j.value("aux_weight", c.aux_weight);
        c.f64 = j.value("f64", c.f64);
        c.d_t = j.value("d_t", c.d_t);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("run config: ") + e.what());
    }
    if (c.loss_period == 0) throw std::invalid_argument("run config: loss_period must be positive");
    if (c.batch_size == 0) throw std::invalid_argument("run config: batch_size must be positive");
    if (!(c.lr > 0.0)) throw std::invalid_argument("run config: lr must be positive");
    return c;
}

RunConfig read_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void write_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
    const std::string text = to_json(cfg).dump(2) + "\n";
    io::write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace panoseg::cli
