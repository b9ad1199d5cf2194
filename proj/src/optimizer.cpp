#include "panoseg/optimizer.hpp"

#include <cmath>

namespace panoseg::train {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamOptions& opt) {
    if (params.size() != grads.size()) throw nn::ShapeError("adam: parameter and gradient sizes differ");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    const bool round = nn::precision() == nn::Precision::f32;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * g;
        state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        double p = params[i] - lr * mhat / (std::sqrt(vhat) + opt.eps);
        if (round) p = static_cast<double>(static_cast<float>(p));
        params[i] = p;
    }
}

Adam::Adam(nn::NamedParams params, AdamOptions opt) : params_(std::move(params)), opt_(opt), states_(params_.size()) {}

void Adam::step(double lr) {
    std::vector<double> zeros;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = params_[i].second;
        if (t.has_grad()) {
            adam_step(t.data_mut(), t.grad(), states_[i], lr, opt_);
        } else {
            zeros.assign(t.numel(), 0.0);
            adam_step(t.data_mut(), zeros, states_[i], lr, opt_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

}  // namespace panoseg::train
