#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "panoseg/numerics/params.hpp"

namespace panoseg::train {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    std::size_t step = 0;
};

// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamOptions& opt = {});

class Adam {
   public:
    Adam(nn::NamedParams params, AdamOptions opt = {});

    // Updates every parameter from its accumulated gradient. Parameters
    // without a gradient are treated as having a zero gradient.
    void step(double lr);
    void zero_grad();

    const nn::NamedParams& params() const { return params_; }

   private:
    nn::NamedParams params_;
    AdamOptions opt_;
    std::vector<AdamState> states_;
};

}  // namespace panoseg::train
