#pragma once

// Gradient checks and oracle comparisons shared by the `verify` command and
// the acceptance tests.

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "panoseg/model.hpp"

namespace panoseg::cli {

struct CheckResult {
    std::string suite;
    std::string name;
    double error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct VerifyOptions {
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
};

// Two-modality 16x32 model used by the full-model gradient check.
ModelConfig tiny_model_config();

// Max relative finite-difference error per differentiable op, tolerance 1e-4.
std::vector<CheckResult> run_grad_suite(const VerifyOptions& opt = {});
// Full toy model only (every parameter tensor, sampled coordinates).
std::vector<CheckResult> run_model_grad_check(const VerifyOptions& opt = {});
// Parallel kernels vs serial references and brute-force oracles.
std::vector<CheckResult> run_oracle_suite(const VerifyOptions& opt = {});

void print_results(std::ostream& out, const std::vector<CheckResult>& results);
bool all_pass(const std::vector<CheckResult>& results);

}  // namespace panoseg::cli
