#include "panoseg/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "panoseg/numerics/ops.hpp"

namespace panoseg::nn {

namespace {

double evaluate(const std::function<Tensor(const std::vector<Tensor>&)>& f, const std::vector<Tensor>& inputs) {
    NoGradGuard no_grad;
    const Tensor y = f(inputs);
    double total = 0.0;
    for (double v : y.data()) total += v;
    if (!std::isfinite(total)) throw NumericError("grad_check: non-finite objective");
    return total;
}

}  // namespace

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                  const GradCheckOptions& options) {
    PrecisionScope f64(Precision::f64);
    for (auto& t : inputs) {
        t.zero_grad();
        t.set_requires_grad(true);
    }
    {
        const Tensor y = f(inputs);
        sum(y).backward();
    }

    Rng rng(options.seed);
    double worst = 0.0;
    for (auto& t : inputs) {
        const std::size_t n = t.numel();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), 0);
        if (options.max_coords_per_input > 0 && options.max_coords_per_input < n) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_input);
        }
        std::vector<double> analytic(n, 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
        auto values = t.data_mut();
        for (auto i : coords) {
            const double saved = values[i];
            auto error_at = [&](double eps) {
                values[i] = saved + eps;
                const double up = evaluate(f, inputs);
                values[i] = saved - eps;
                const double down = evaluate(f, inputs);
                values[i] = saved;
                const double numeric = (up - down) / (2.0 * eps);
                return std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            };
            double err = error_at(options.eps);
            if (err > options.retry_above) err = std::min(err, error_at(options.eps * options.retry_scale));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace panoseg::nn
