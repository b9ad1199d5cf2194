#pragma once

// Subcommands of the `panoseg` tool. Each returns a process exit code.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "panoseg/cli/run_config.hpp"
#include "panoseg/grid.hpp"

namespace panoseg::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kVerifyFailed = 3 };

struct GenDataArgs {
    std::string out;
    std::size_t samples = 32;
    std::size_t height = 64;
    std::uint64_t seed = 0;
};

struct EvalArgs {
    std::string data;
    std::string ckpt;
    std::string config;  // defaults to config.json next to the checkpoint
    std::string out;     // defaults to <ckpt dir>/eval
    std::string split = "val";
    std::vector<double> edge_ratios{0.1, 0.3, 0.5};
    bool refine = false;
    bool single_view = false;
};

struct InferArgs {
    std::string ckpt;
    std::string config;
    std::string sample;  // sample directory
    std::string out;
    bool refine = false;
    bool single_view = false;
};

struct VerifyArgs {
    std::string suite = "all";
    std::size_t seeds = 5;
    bool inject_fault = false;
};

int cmd_gen_data(const GenDataArgs& args, std::ostream& out, std::ostream& err);
// Trains with `cfg`, writing checkpoint.bin, losses.csv and config.json to cfg.out_dir.
int cmd_train(RunConfig cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_infer(const InferArgs& args, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err);

// Parses argv and dispatches to a subcommand.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// P6 image with one palette colour per class id.
void write_label_ppm(const std::string& path, const LabelMap& labels);

}  // namespace panoseg::cli
