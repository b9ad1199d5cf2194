#include "panoseg/cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>

#include "panoseg/decoder.hpp"
#include "panoseg/encoder.hpp"
#include "panoseg/fusion.hpp"
#include "panoseg/geometry.hpp"
#include "panoseg/losses.hpp"
#include "panoseg/model.hpp"
#include "panoseg/numerics/grad_check.hpp"
#include "panoseg/numerics/kernels.hpp"
#include "panoseg/numerics/ops.hpp"
#include "panoseg/reference/kernels.hpp"
#include "panoseg/reference/oracles.hpp"
#include "panoseg/refinement.hpp"

namespace panoseg::cli {

using nn::Tensor;
using Inputs = std::vector<Tensor>;
using Fn = std::function<Tensor(const Inputs&)>;

namespace {

constexpr double kGradTol = 1e-4;

Tensor rnd(nn::Shape shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
    return Tensor::uniform(std::move(shape), rng, lo, hi);
}

// Multiplies by a fixed pseudo-random weight so that layout ops receive
// non-uniform upstream gradients.
Tensor probe(const Tensor& y) {
    nn::Rng rng(977);
    return y * Tensor::uniform(y.shape(), rng, 0.5, 1.5);
}

struct GradCase {
    std::string name;
    // Builds the function and its inputs for one seed.
    std::function<std::pair<Fn, Inputs>(nn::Rng&)> make;
    std::size_t max_coords = 0;
};

std::vector<GradCase> grad_cases() {
    using nn::BinaryOp;
    std::vector<GradCase> cases;
    auto binary = [&](std::string name, BinaryOp op, double lo_b, double hi_b) {
        cases.push_back({name, [op, lo_b, hi_b](nn::Rng& r) {
                             return std::pair<Fn, Inputs>{[op](const Inputs& in) { return probe(nn::elementwise(op, in[0], in[1])); },
                                                          {rnd({2, 3, 4}, r), rnd({3, 1}, r, lo_b, hi_b)}};
                         }});
    };
    binary("elementwise.add", BinaryOp::add, -1, 1);
    binary("elementwise.sub", BinaryOp::sub, -1, 1);
    binary("elementwise.mul", BinaryOp::mul, -1, 1);
    binary("elementwise.div", BinaryOp::div, 0.5, 2.0);
    binary("elementwise.max", BinaryOp::max, -1, 1);
    binary("elementwise.min", BinaryOp::min, -1, 1);
    cases.push_back({"elementwise.scalar", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(3.0 - in[0] * 2.5 / 4.0 + 1.0); }, {rnd({5}, r)}};
                     }});

    auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> f, double lo, double hi) {
        cases.push_back({name, [f, lo, hi](nn::Rng& r) {
                             return std::pair<Fn, Inputs>{[f](const Inputs& in) { return probe(f(in[0])); }, {rnd({3, 5}, r, lo, hi)}};
                         }});
    };
    unary("exp", [](const Tensor& x) { return nn::exp(x); }, -2, 2);
    unary("log", [](const Tensor& x) { return nn::log(x); }, 0.5, 3);
    unary("activation.sigmoid", [](const Tensor& x) { return nn::sigmoid(x); }, -4, 4);
    unary("activation.relu", [](const Tensor& x) { return nn::relu(x); }, -1, 1);
    unary("activation.gelu", [](const Tensor& x) { return nn::gelu(x); }, -3, 3);
    unary("activation.softmax", [](const Tensor& x) { return nn::softmax(x, 1); }, -3, 3);
    unary("activation.log_softmax", [](const Tensor& x) { return nn::log_softmax(x, -1); }, -3, 3);

    cases.push_back({"matmul", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::matmul(in[0], in[1])); },
                                                      {rnd({3, 4}, r), rnd({4, 5}, r)}};
                     }});
    cases.push_back({"bmm", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::bmm(in[0], in[1])); },
                                                      {rnd({2, 3, 4}, r), rnd({2, 4, 2}, r)}};
                     }});
    cases.push_back({"linear", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::linear(in[0], in[1], in[2])); },
                                                      {rnd({2, 3, 5}, r), rnd({4, 5}, r), rnd({4}, r)}};
                     }});
    cases.push_back({"layout.reshape_permute_transpose", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) {
                                                          const Tensor a = nn::permute(nn::reshape(in[0], {2, 3, 4}), {2, 0, 1});
                                                          return probe(nn::transpose(a, 0, 2));
                                                      },
                                                      {rnd({6, 4}, r)}};
                     }});
    cases.push_back({"layout.concat", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::concat({in[0], in[1]}, 1)); },
                                                      {rnd({2, 3, 2}, r), rnd({2, 1, 2}, r)}};
                     }});
    cases.push_back({"layout.slice_pad", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::pad(nn::slice(in[0], 1, 1, 3), 0, 1, 2)); },
                                                      {rnd({2, 5}, r)}};
                     }});
    cases.push_back({"layout.roll", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::roll(in[0], -3, -1)); }, {rnd({2, 7}, r)}};
                     }});
    cases.push_back({"reduce.sum", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::reduce(nn::ReduceOp::sum, in[0], {1})); },
                                                      {rnd({2, 3, 4}, r)}};
                     }});
    cases.push_back({"reduce.mean", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::reduce(nn::ReduceOp::mean, in[0], {0, 2}, true)); },
                                                      {rnd({2, 3, 4}, r)}};
                     }});
    cases.push_back({"reduce.max", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::reduce(nn::ReduceOp::max, in[0], {2})); },
                                                      {rnd({2, 3, 4}, r)}};
                     }});
    cases.push_back({"reduce.argmax", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::max_with_argmax(in[0], 0).values); },
                                                      {rnd({4, 3}, r)}};
                     }});
    auto conv = [&](std::string name, std::size_t k, std::size_t stride, nn::PaddingMode mode) {
        cases.push_back({name, [k, stride, mode](nn::Rng& r) {
                             return std::pair<Fn, Inputs>{[k, stride, mode](const Inputs& in) {
                                                              auto o = nn::Conv2dOptions::same(k, k, mode);
                                                              o.stride = stride;
                                                              return probe(nn::conv2d(in[0], in[1], in[2], o));
                                                          },
                                                          {rnd({2, 2, 5, 6}, r), rnd({3, 2, k, k}, r), rnd({3}, r)}};
                         }});
    };
    conv("conv2d.zero3x3", 3, 1, nn::PaddingMode::zero);
    conv("conv2d.spherical3x3", 3, 1, nn::PaddingMode::spherical);
    conv("conv2d.spherical5x5_stride2", 5, 2, nn::PaddingMode::spherical);
    conv("conv2d.1x1", 1, 1, nn::PaddingMode::zero);
    cases.push_back({"interpolate_bilinear", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) {
                                                          return probe(nn::concat({nn::reshape(nn::interpolate_bilinear(in[0], 6, 10), {1, 2, 60}),
                                                                                   nn::reshape(nn::interpolate_bilinear(in[0], 2, 7), {1, 2, 14})},
                                                                                  2));
                                                      },
                                                      {rnd({1, 2, 3, 5}, r)}};
                     }});
    cases.push_back({"layer_norm", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(nn::layer_norm(in[0], in[1], in[2])); },
                                                      {rnd({3, 6}, r), rnd({6}, r), rnd({6}, r)}};
                     }});
    for (std::size_t window : {0, 2, 3}) {
        cases.push_back({"window_attention.w" + std::to_string(window), [window](nn::Rng& r) {
                             return std::pair<Fn, Inputs>{[window](const Inputs& in) {
                                                              encoder::AttentionParams p{in[1], in[2], in[3], in[4]};
                                                              return probe(encoder::window_attention(in[0], p, 2, window));
                                                          },
                                                          {rnd({1, 4, 4, 8}, r), rnd({24, 8}, r, -0.5, 0.5), rnd({24}, r),
                                                           rnd({8, 8}, r, -0.5, 0.5), rnd({8}, r)}};
                         }});
    }
    cases.push_back({"encoder.two_block",
                     [](nn::Rng& r) {
                         encoder::EncoderConfig cfg;
                         cfg.image_h = 16;
                         cfg.image_w = 32;
                         cfg.patch = 8;
                         cfg.depth = 2;
                         cfg.global_blocks = {1, 2};
                         cfg.embed_dim = 8;
                         cfg.heads = 2;
                         cfg.window = 2;
                         cfg.mlp_ratio = 2;
                         auto params = std::make_shared<encoder::EncoderParams>(encoder::EncoderParams::init(cfg, r));
                         nn::NamedParams named;
                         params->collect("", named);
                         Inputs in{rnd({1, 3, 16, 32}, r, 0, 1)};
                         for (auto& [n, t] : named) in.push_back(t);
                         return std::pair<Fn, Inputs>{[cfg, params](const Inputs& x) {
                                                          std::vector<Tensor> parts;
                                                          for (const auto& b : encoder::encode(x[0], cfg, *params)) {
                                                              parts.push_back(nn::reshape(b, {b.numel()}));
                                                          }
                                                          return probe(nn::concat(std::span<const Tensor>(parts), 0));
                                                      },
                                                      in};
                     },
                     12});

    auto attention_inputs = [](nn::Rng& r, std::size_t c, std::size_t k) {
        auto p = std::make_shared<fusion::CBAMParams>(fusion::CBAMParams::init(c, 2, k, r));
        for (auto* t : {&p->mlp.b1, &p->mlp.b2, &p->spatial.bias}) {
            const auto v = rnd(t->shape(), r, -0.3, 0.3);
            std::copy(v.data().begin(), v.data().end(), t->data_mut().begin());
        }
        return p;
    };
    auto cbam_inputs = [](const fusion::CBAMParams& p, Tensor x) {
        return Inputs{std::move(x), p.mlp.w1, p.mlp.b1, p.mlp.w2, p.mlp.b2, p.spatial.kernel, p.spatial.bias};
    };
    auto cbam_params = [](const Inputs& in) {
        fusion::CBAMParams p;
        p.mlp = {in[1], in[2], in[3], in[4]};
        p.spatial = {in[5], in[6]};
        return p;
    };
    cases.push_back({"cbam.channel", [=](nn::Rng& r) {
                         auto p = attention_inputs(r, 4, 3);
                         return std::pair<Fn, Inputs>{[=](const Inputs& in) { return probe(fusion::cbam_channel_attention(in[0], cbam_params(in).mlp)); },
                                                      cbam_inputs(*p, rnd({2, 4, 5, 5}, r))};
                     }});
    cases.push_back({"cbam.spatial", [=](nn::Rng& r) {
                         auto p = attention_inputs(r, 4, 3);
                         return std::pair<Fn, Inputs>{[=](const Inputs& in) { return probe(fusion::cbam_spatial_attention(in[0], cbam_params(in).spatial)); },
                                                      cbam_inputs(*p, rnd({2, 4, 5, 5}, r))};
                     }});
    cases.push_back({"cbam", [=](nn::Rng& r) {
                         auto p = attention_inputs(r, 4, 3);
                         return std::pair<Fn, Inputs>{[=](const Inputs& in) { return probe(fusion::cbam(in[0], cbam_params(in))); },
                                                      cbam_inputs(*p, rnd({1, 4, 6, 6}, r))};
                     }});
    cases.push_back({"mcbam", [=](nn::Rng& r) {
                         auto p = attention_inputs(r, 4, 3);
                         const fusion::MCBAMConfig cfg{4, 4, 2, 2, 2, 3};
                         return std::pair<Fn, Inputs>{[=](const Inputs& in) { return probe(fusion::mcbam(in[0], cfg, cbam_params(in))); },
                                                      cbam_inputs(*p, rnd({1, 4, 8, 8}, r))};
                     }});
    cases.push_back({"fusion_block", [=](nn::Rng& r) {
                         const fusion::MCBAMConfig cfg{2, 2, 1, 1, 2, 1};
                         auto p = std::make_shared<fusion::FusionBlockParams>(fusion::FusionBlockParams::init(4, 3, cfg, r));
                         Inputs in{rnd({2, 4, 3, 4}, r)};
                         nn::NamedParams named;
                         p->collect("", named);
                         for (auto& [n, t] : named) in.push_back(t);
                         return std::pair<Fn, Inputs>{[=](const Inputs& x) { return probe(fusion::fusion_block(x[0], fusion::AttentionMode::mcbam, cfg, *p)); },
                                                      in};
                     }});
    cases.push_back({"mlp_decode", [](nn::Rng& r) {
                         decoder::DecoderConfig cfg;
                         cfg.embed_dim = 4;
                         cfg.num_classes = 3;
                         cfg.branch_channels = {2, 2};
                         cfg.out_h = 6;
                         cfg.out_w = 12;
                         auto p = std::make_shared<decoder::DecoderParams>(decoder::DecoderParams::init(cfg, r));
                         const auto hpe = encoder::horizontal_positional_encoding(6, 4);
                         const Tensor pos = decoder::positional_rows(hpe, 2);
                         Inputs in{rnd({2, 2, 3, 6}, r), rnd({2, 2, 3, 6}, r)};
                         nn::NamedParams named;
                         p->collect("", named);
                         for (auto& [n, t] : named) in.push_back(t);
                         return std::pair<Fn, Inputs>{[=](const Inputs& x) { return probe(decoder::mlp_decode({x[0], x[1]}, pos, cfg, *p)); }, in};
                     }});
    cases.push_back({"spherical_attention", [](nn::Rng& r) {
                         auto p = std::make_shared<decoder::SphericalAttentionParams>(decoder::SphericalAttentionParams::init(2, 3, r));
                         Inputs in{rnd({1, 2, 4, 6}, r), rnd({1, 2, 4, 6}, r)};
                         nn::NamedParams named;
                         p->collect("", named);
                         for (auto& [n, t] : named) in.push_back(t);
                         return std::pair<Fn, Inputs>{[=](const Inputs& x) { return probe(decoder::spherical_attention(x[0], x[1], *p)); }, in};
                     }});
    cases.push_back({"blend_views", [](nn::Rng& r) {
                         return std::pair<Fn, Inputs>{[](const Inputs& in) { return probe(decoder::blend_views(in[0], in[1], nn::sigmoid(in[2]))); },
                                                      {rnd({1, 2, 3, 4}, r), rnd({1, 2, 3, 4}, r), rnd({1, 2, 3, 4}, r)}};
                     }});
    auto loss_case = [&](std::string name, bool jaccard) {
        cases.push_back({name, [jaccard](nn::Rng& r) {
                             auto labels = std::make_shared<std::vector<std::int32_t>>(2 * 3 * 4);
                             auto ignore = std::make_shared<std::vector<std::uint8_t>>(labels->size(), 0);
                             for (auto& l : *labels) l = static_cast<std::int32_t>(r() % 3);
                             (*ignore)[5] = 1;
                             return std::pair<Fn, Inputs>{[=](const Inputs& in) {
                                                              const train::LossTarget t{*labels, *ignore};
                                                              return jaccard ? train::jaccard_loss(in[0], t) : train::cross_entropy_loss(in[0], t);
                                                          },
                                                          {rnd({2, 3, 3, 4}, r, -2, 2)}};
                         }});
    };
    loss_case("loss.jaccard", true);
    loss_case("loss.cross_entropy", false);
    return cases;
}

double rel_error(std::span<const double> got, std::span<const double> want) {
    if (got.size() != want.size()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(std::abs(want[i]), 1e-9));
    }
    return worst;
}

double abs_error(std::span<const double> got, std::span<const double> want) {
    if (got.size() != want.size()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    return worst;
}

// Accumulates the worst error of a named check across seeds.
class Collector {
   public:
    explicit Collector(std::string suite) : suite_(std::move(suite)) {}

    void record(const std::string& name, double error, double tolerance) {
        auto it = std::find_if(results_.begin(), results_.end(), [&](const CheckResult& r) { return r.name == name; });
        if (it == results_.end()) {
            results_.push_back({suite_, name, error, tolerance, false});
            it = results_.end() - 1;
        }
        it->error = std::isnan(error) ? INFINITY : std::max(it->error, error);
        it->pass = it->error <= tolerance;
    }

    std::vector<CheckResult> take() { return std::move(results_); }

   private:
    std::string suite_;
    std::vector<CheckResult> results_;
};

}  // namespace

std::vector<CheckResult> run_grad_suite(const VerifyOptions& opt) {
    Collector col("grads");
    for (const auto& c : grad_cases()) {
        for (std::size_t s = 0; s < opt.seeds; ++s) {
            nn::PrecisionScope f64(nn::Precision::f64);
            nn::Rng rng(opt.base_seed + 7919 * s);
            double err;
            try {
                auto [f, inputs] = c.make(rng);
                nn::GradCheckOptions gopt;
                gopt.max_coords_per_input = c.max_coords;
                gopt.seed = s;
                err = nn::grad_check(f, inputs, gopt);
            } catch (const std::exception&) {
                err = INFINITY;
            }
            col.record(c.name, err, kGradTol);
        }
    }
    auto out = col.take();
    auto model = run_model_grad_check(opt);
    out.insert(out.end(), model.begin(), model.end());
    return out;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.encoder.image_h = 16;
    cfg.encoder.image_w = 32;
    cfg.encoder.patch = 8;
    cfg.encoder.depth = 2;
    cfg.encoder.global_blocks = {1, 2};
    cfg.encoder.embed_dim = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.window = 2;
    cfg.encoder.mlp_ratio = 2;
    cfg.modalities = {encoder::Modality::rgb, encoder::Modality::depth};
    cfg.mcbam = {2, 2, 1, 1, 4, 1};
    cfg.fusion_dim = 4;
    cfg.decoder_dim = 4;
    cfg.num_classes = 3;
    cfg.spherical_kernel = 3;
    return cfg;
}

std::vector<CheckResult> run_model_grad_check(const VerifyOptions& opt) {
    Collector col("grads");
    for (std::size_t s = 0; s < opt.seeds; ++s) {
        nn::PrecisionScope f64(nn::Precision::f64);
        double err;
        try {
            const SegModel model(tiny_model_config(), opt.base_seed + s);
            nn::Rng rng(opt.base_seed + 31 * s);
            // Zero-initialised biases leave dead channel-MLP units whose identical
            // window outputs tie in the max; move off those kinks.
            for (auto& [name, t] : model.parameters()) {
                const bool hidden_bias = name.ends_with("mlp_b1");
                if (!hidden_bias && !name.ends_with("_b") && !name.ends_with("_b2")) continue;
                const auto v = rnd(t.shape(), rng, hidden_bias ? 0.1 : -0.2, hidden_bias ? 0.4 : 0.2);
                std::copy(v.data().begin(), v.data().end(), t.data_mut().begin());
            }
            Inputs in{rnd({2, 3, 16, 32}, rng, 0, 1)};
            for (auto& [n, t] : model.parameters()) in.push_back(t);
            nn::GradCheckOptions gopt;
            gopt.max_coords_per_input = 6;
            gopt.seed = s;
            err = nn::grad_check([&](const Inputs& x) { return probe(model.forward(x[0]).fused); }, in, gopt);
        } catch (const std::exception&) {
            err = INFINITY;
        }
        col.record("model.full_toy", err, kGradTol);
    }
    return col.take();
}

std::vector<CheckResult> run_oracle_suite(const VerifyOptions& opt) {
    namespace K = nn::kernels;
    namespace R = reference::kernels;
    Collector col("oracles");
    constexpr double kExact = 1e-12;

    for (std::size_t s = 0; s < opt.seeds; ++s) {
        nn::Rng rng(opt.base_seed + 104729 * s);
        auto dims = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
        auto vec = [&](std::size_t n) {
            std::vector<double> v(n);
            std::uniform_real_distribution<double> u(-1, 1);
            for (auto& x : v) x = u(rng);
            return v;
        };

        {  // matmul kernels vs serial references
            const std::size_t m = dims(1, 9), k = dims(1, 9), n = dims(1, 9);
            const auto a = vec(m * k), b = vec(k * n), at = vec(k * m), bt = vec(n * k);
            std::vector<double> c1(m * n), c2(m * n);
            K::matmul(m, k, n, a.data(), b.data(), c1.data());
            R::matmul(m, k, n, a.data(), b.data(), c2.data());
            col.record("kernel.matmul", abs_error(c1, c2), kExact);
            std::fill(c1.begin(), c1.end(), 0.0);
            std::fill(c2.begin(), c2.end(), 0.0);
            K::matmul_at_b_acc(m, k, n, at.data(), b.data(), c1.data());
            R::matmul_at_b_acc(m, k, n, at.data(), b.data(), c2.data());
            col.record("kernel.matmul_at_b", abs_error(c1, c2), kExact);
            std::fill(c1.begin(), c1.end(), 0.0);
            std::fill(c2.begin(), c2.end(), 0.0);
            K::matmul_a_bt_acc(m, k, n, a.data(), bt.data(), c1.data());
            R::matmul_a_bt_acc(m, k, n, a.data(), bt.data(), c2.data());
            col.record("kernel.matmul_a_bt", abs_error(c1, c2), kExact);
        }
        for (auto mode : {nn::PaddingMode::zero, nn::PaddingMode::spherical}) {
            K::ConvGeometry g;
            g.batch = dims(1, 2);
            g.in_channels = dims(1, 3);
            g.out_channels = dims(1, 3);
            g.kernel_h = 2 * dims(0, 2) + 1;
            g.kernel_w = 2 * dims(0, 2) + 1;
            g.height = dims(g.kernel_h, 7);
            g.width = dims(g.kernel_w, 9);
            g.stride = dims(1, 2);
            g.pad_h = g.kernel_h / 2;
            g.pad_w = g.kernel_w / 2;
            g.padding = mode;
            const std::string tag = mode == nn::PaddingMode::zero ? "zero" : "spherical";
            const auto x = vec(g.batch * g.in_channels * g.height * g.width);
            const auto w = vec(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w);
            const auto bias = vec(g.out_channels);
            const std::size_t out_n = g.batch * g.out_channels * g.out_h() * g.out_w();
            std::vector<double> o1(out_n), o2(out_n);
            K::conv2d_forward(g, x.data(), w.data(), bias.data(), o1.data());
            R::conv2d_forward(g, x.data(), w.data(), bias.data(), o2.data());
            col.record("kernel.conv2d_forward." + tag, abs_error(o1, o2), kExact);
            const auto gout = vec(out_n);
            std::vector<double> gx1(x.size()), gx2(x.size()), gw1(w.size()), gw2(w.size()), gb1(bias.size()), gb2(bias.size());
            K::conv2d_backward_input(g, gout.data(), w.data(), gx1.data());
            R::conv2d_backward_input(g, gout.data(), w.data(), gx2.data());
            col.record("kernel.conv2d_backward_input." + tag, abs_error(gx1, gx2), kExact);
            K::conv2d_backward_weight(g, gout.data(), x.data(), gw1.data(), gb1.data());
            R::conv2d_backward_weight(g, gout.data(), x.data(), gw2.data(), gb2.data());
            col.record("kernel.conv2d_backward_weight." + tag, std::max(abs_error(gw1, gw2), abs_error(gb1, gb2)), kExact);

            nn::PrecisionScope f64(nn::Precision::f64);
            const Tensor xt = Tensor::from_data({g.batch, g.in_channels, g.height, g.width}, x);
            const Tensor wt = Tensor::from_data({g.out_channels, g.in_channels, g.kernel_h, g.kernel_w}, w);
            const Tensor bt = Tensor::from_data({g.out_channels}, bias);
            nn::Conv2dOptions co{g.stride, mode, g.pad_h, g.pad_w};
            col.record("conv2d.padded_oracle." + tag,
                       abs_error(nn::conv2d(xt, wt, bt, co).data(),
                                 reference::conv2d_padded_oracle(xt, wt, bt, g.stride, mode, g.pad_h, g.pad_w)),
                       kExact);
        }
        {  // bilinear
            const std::size_t planes = dims(1, 3), h = dims(1, 6), w = dims(1, 6), oh = dims(1, 12), ow = dims(1, 12);
            const auto x = vec(planes * h * w), gout = vec(planes * oh * ow);
            std::vector<double> o1(planes * oh * ow), o2(o1.size()), g1(x.size()), g2(x.size());
            K::bilinear_forward(planes, h, w, oh, ow, x.data(), o1.data());
            R::bilinear_forward(planes, h, w, oh, ow, x.data(), o2.data());
            col.record("kernel.bilinear_forward", abs_error(o1, o2), kExact);
            K::bilinear_backward(planes, h, w, oh, ow, gout.data(), g1.data());
            R::bilinear_backward(planes, h, w, oh, ow, gout.data(), g2.data());
            col.record("kernel.bilinear_backward", abs_error(g1, g2), kExact);
            nn::PrecisionScope f64(nn::Precision::f64);
            const Tensor xt = Tensor::from_data({1, planes, h, w}, x);
            col.record("interpolate_bilinear.oracle",
                       abs_error(nn::interpolate_bilinear(xt, oh, ow).data(), reference::bilinear_oracle(xt, oh, ow)), kExact);
        }
        {  // attention blocks vs brute force, production precision
            const std::size_t b = dims(1, 2), c = dims(1, 8), h = dims(8, 16), w = dims(8, 16);
            auto p = fusion::CBAMParams::init(c, 4, 3, rng);
            const Tensor x = rnd({b, c, h, w}, rng);
            col.record("cbam.channel_oracle",
                       rel_error(fusion::cbam_channel_attention(x, p.mlp).data(), reference::channel_attention_oracle(x, p.mlp)), 1e-5);
            col.record("cbam.oracle", rel_error(fusion::cbam(x, p).data(), reference::cbam_oracle(x, p)), 1e-5);
            const fusion::MCBAMConfig cfg{8, 8, 4, 4, 4, 3};
            col.record("mcbam.oracle_8x8_stride4", rel_error(fusion::mcbam(x, cfg, p).data(), reference::mcbam_oracle(x, cfg, p)), 1e-5);
            const fusion::MCBAMConfig odd{5, 3, 2, 2, 4, 3};
            col.record("mcbam.oracle_5x3_stride2", rel_error(fusion::mcbam(x, odd, p).data(), reference::mcbam_oracle(x, odd, p)), 1e-5);

            nn::PrecisionScope f64(nn::Precision::f64);
            const fusion::MCBAMConfig whole{h, w, h, w, 4, 3};
            col.record("mcbam.whole_window_equals_cbam", abs_error(fusion::mcbam(x, whole, p).data(), fusion::cbam(x, p).data()), 0.0);
        }
        {  // roll equivariance of the spherical layers
            nn::PrecisionScope f64(nn::Precision::f64);
            const std::size_t w = 4 * dims(2, 4);
            const Tensor x = rnd({1, 3, 5, w}, rng), k = rnd({2, 3, 3, 3}, rng), bias = rnd({2}, rng);
            const auto sph = nn::Conv2dOptions::same(3, 3, nn::PaddingMode::spherical);
            auto sa = decoder::SphericalAttentionParams::init(3, 3, rng);
            const Tensor x2 = rnd({1, 3, 5, w}, rng);
            const auto zero = nn::Conv2dOptions::same(3, 3, nn::PaddingMode::zero);
            double conv_err = 0.0, att_err = 0.0, zero_err = 0.0;
            for (std::size_t shift : {std::size_t{1}, w / 4, w / 2}) {
                const auto s = static_cast<std::ptrdiff_t>(shift);
                conv_err = std::max(conv_err, abs_error(nn::conv2d(geometry::roll_horizontal(x, s), k, bias, sph).data(),
                                                        geometry::roll_horizontal(nn::conv2d(x, k, bias, sph), s).data()));
                zero_err = std::max(zero_err, abs_error(nn::conv2d(geometry::roll_horizontal(x, s), k, bias, zero).data(),
                                                        geometry::roll_horizontal(nn::conv2d(x, k, bias, zero), s).data()));
                att_err = std::max(att_err, abs_error(decoder::spherical_attention(geometry::roll_horizontal(x, s),
                                                                                   geometry::roll_horizontal(x2, s), sa)
                                                          .data(),
                                                      geometry::roll_horizontal(decoder::spherical_attention(x, x2, sa), s).data()));
            }
            col.record("equivariance.spherical_conv", conv_err, 1e-6);
            col.record("equivariance.spherical_attention", att_err, 1e-6);
            // Zero padding must break the symmetry, otherwise the check above proves nothing.
            col.record("equivariance.zero_pad_control_breaks", zero_err > 1e-6 ? 0.0 : 1.0, 0.0);
        }
        {  // refinement vs exhaustive oracles
            const std::size_t h = dims(2, 6), w = dims(2, 6);
            LabelMap init(h, w);
            for (auto& v : init.values) v = static_cast<std::int32_t>(rng() % 3);
            std::vector<refinement::InstanceMask> inst;
            const std::size_t n_masks = dims(0, 3);
            for (std::size_t i = 0; i < n_masks; ++i) {
                Mask m(h, w);
                for (auto& v : m.values) v = rng() % 2;
                m.values[rng() % m.size()] = 1;
                inst.push_back(refinement::make_instance(m, static_cast<double>(rng() % 4) / 4.0));
            }
            col.record("refine_semantics.oracle",
                       refinement::refine_semantics(init, inst) == reference::refine_semantics_oracle(init, inst) ? 0.0 : 1.0, 0.0);

            std::vector<refinement::ScoredClassMask> scored;
            for (std::size_t i = 0; i < n_masks; ++i) {
                refinement::ScoredClassMask m{{}, h, w, static_cast<double>(rng() % 5) / 4.0, static_cast<std::int32_t>(rng() % 3)};
                for (std::size_t p = 0; p < h * w; ++p) m.mask.push_back(static_cast<double>(rng() % 3) / 2.0);
                scored.push_back(m);
            }
            const refinement::ScoreFusionOptions fo{0.25, 0.05, 2, 3};
            col.record("fuse_open_vocab_scores.oracle",
                       refinement::fuse_open_vocab_scores(scored, h, w, fo) == reference::fuse_scores_oracle(scored, h, w, fo) ? 0.0 : 1.0,
                       0.0);
            col.record("connected_components.oracle",
                       refinement::connected_components(init) == reference::components_oracle(init) ? 0.0 : 1.0, 0.0);
        }
        {  // depth threshold and positional encoding identities
            std::vector<double> depths(dims(1, 500));
            std::uniform_real_distribution<double> u(0.0, 10.0);
            for (auto& d : depths) d = u(rng);
            const double p = reference::percentile_oracle(depths, 99.5);
            const double want = std::floor(p * 10.0 + 0.5) / 10.0;
            col.record("compute_d_t.percentile_oracle", std::abs(encoder::compute_d_t(depths) - want), 1e-12);

            const std::size_t wf = 2 * dims(1, 32), c = 2 * dims(1, 16);
            const auto hpe = encoder::horizontal_positional_encoding(wf, c);
            double err = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t j = 0; j < wf; ++j) {
                    err = std::max(err, std::abs(hpe.pe_shifted.at({ch, j}) - hpe.pe.at({ch, (j + wf / 2) % wf})));
                }
            col.record("hpe.shift_identity", err, 0.0);
        }
    }
    return col.take();
}

void print_results(std::ostream& out, const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        out << (r.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(8) << r.suite << std::setw(44) << r.name
            << " max_err=" << std::scientific << std::setprecision(3) << r.error << "  tol=" << r.tolerance << std::defaultfloat
            << '\n';
    }
    const auto failed = std::count_if(results.begin(), results.end(), [](const CheckResult& r) { return !r.pass; });
    out << results.size() << " checks, " << failed << " failed\n";
}

bool all_pass(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
}

}  // namespace panoseg::cli
