#include "panoseg/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace panoseg::nn {

using detail::make_result;
using detail::Node;

namespace {

// ---- broadcasting helpers ------------------------------------------------

struct Broadcast {
    Shape out;
    std::vector<std::size_t> stride_a;  // aligned to out, 0 where broadcast
    std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape& s, std::size_t rank) {
    std::vector<std::size_t> strides(rank, 0);
    std::size_t acc = 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t src = s.size() - 1 - i;
        const std::size_t dst = rank - 1 - i;
        strides[dst] = s[src] == 1 ? 0 : acc;
        acc *= s[src];
    }
    return strides;
}

Broadcast broadcast(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Broadcast bc;
    bc.out.assign(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " are not broadcastable");
        }
        bc.out[rank - 1 - i] = std::max(da, db);
    }
    bc.stride_a = aligned_strides(a, rank);
    bc.stride_b = aligned_strides(b, rank);
    return bc;
}

template <class Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
    const std::size_t rank = bc.out.size();
    const std::size_t total = numel(bc.out);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < total; ++o) {
        fn(o, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += bc.stride_a[d];
            ib += bc.stride_b[d];
            if (idx[d] < bc.out[d]) break;
            ia -= bc.stride_a[d] * idx[d];
            ib -= bc.stride_b[d] * idx[d];
            idx[d] = 0;
        }
    }
}

double apply(BinaryOp op, double a, double b) {
    switch (op) {
        case BinaryOp::add: return a + b;
        case BinaryOp::sub: return a - b;
        case BinaryOp::mul: return a * b;
        case BinaryOp::div: return a / b;
        case BinaryOp::max: return a >= b ? a : b;
        case BinaryOp::min: return a <= b ? a : b;
    }
    return 0.0;
}

// Partial derivatives of op(a, b) wrt a and b.
std::pair<double, double> partials(BinaryOp op, double a, double b) {
    switch (op) {
        case BinaryOp::add: return {1.0, 1.0};
        case BinaryOp::sub: return {1.0, -1.0};
        case BinaryOp::mul: return {b, a};
        case BinaryOp::div: return {1.0 / b, -a / (b * b)};
        case BinaryOp::max: return a >= b ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0};
        case BinaryOp::min: return a <= b ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0};
    }
    return {0.0, 0.0};
}

const char* op_name(BinaryOp op) {
    switch (op) {
        case BinaryOp::add: return "add";
        case BinaryOp::sub: return "sub";
        case BinaryOp::mul: return "mul";
        case BinaryOp::div: return "div";
        case BinaryOp::max: return "max";
        case BinaryOp::min: return "min";
    }
    return "binary";
}

// Splits a shape around one axis into (outer, extent, inner).
struct AxisSplit {
    std::size_t outer, n, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

template <class Fn>
Tensor unary(const Tensor& x, const char* name, Fn&& forward_and_derivative) {
    const auto xv = x.data();
    std::vector<double> out(xv.size()), deriv(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        auto [y, d] = forward_and_derivative(xv[i]);
        out[i] = y;
        deriv[i] = d;
    }
    return make_result(x.shape(), std::move(out), {x},
                       [deriv = std::move(deriv)](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += deriv[i] * self.grad[i];
                       },
                       name);
}

double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    const auto av = a.data();
    const auto bv = b.data();
    if (a.shape() == b.shape()) {
        std::vector<double> out(av.size());
        for (std::size_t i = 0; i < av.size(); ++i) out[i] = apply(op, av[i], bv[i]);
        return make_result(a.shape(), std::move(out), {a, b},
                           [op](Node& self) {
                               const auto& x = self.parents[0]->value;
                               const auto& y = self.parents[1]->value;
                               const bool na = self.parent_needs_grad(0), nb = self.parent_needs_grad(1);
                               auto* ga = na ? self.parents[0]->grad_buffer().data() : nullptr;
                               auto* gb = nb ? self.parents[1]->grad_buffer().data() : nullptr;
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                   auto [da, db] = partials(op, x[i], y[i]);
                                   if (ga) ga[i] += da * self.grad[i];
                                   if (gb) gb[i] += db * self.grad[i];
                               }
                           },
                           op_name(op));
    }
    const Broadcast bc = broadcast(a.shape(), b.shape());
    std::vector<double> out(numel(bc.out));
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = apply(op, av[ia], bv[ib]); });
    return make_result(bc.out, std::move(out), {a, b},
                       [op, bc](Node& self) {
                           const auto& x = self.parents[0]->value;
                           const auto& y = self.parents[1]->value;
                           auto* ga = self.parent_needs_grad(0) ? self.parents[0]->grad_buffer().data() : nullptr;
                           auto* gb = self.parent_needs_grad(1) ? self.parents[1]->grad_buffer().data() : nullptr;
                           for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                               auto [da, db] = partials(op, x[ia], y[ib]);
                               if (ga) ga[ia] += da * self.grad[o];
                               if (gb) gb[ib] += db * self.grad[o];
                           });
                       },
                       op_name(op));
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
    const auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = apply(op, av[i], b);
    return make_result(a.shape(), std::move(out), {a},
                       [op, b](Node& self) {
                           const auto& x = self.parents[0]->value;
                           auto& ga = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += partials(op, x[i], b).first * self.grad[i];
                       },
                       op_name(op));
}

Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::add, a, b); }
Tensor operator-(const Tensor& a, double b) { return elementwise(BinaryOp::sub, a, b); }
Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::mul, a, b); }
Tensor operator/(const Tensor& a, double b) { return elementwise(BinaryOp::div, a, b); }
Tensor operator+(double a, const Tensor& b) { return elementwise(BinaryOp::add, b, a); }
Tensor operator-(double a, const Tensor& b) { return elementwise(BinaryOp::add, -b, a); }
Tensor operator*(double a, const Tensor& b) { return elementwise(BinaryOp::mul, b, a); }
Tensor operator-(const Tensor& a) { return elementwise(BinaryOp::mul, a, -1.0); }
Tensor maximum(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::max, a, b); }
Tensor minimum(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::min, a, b); }

Tensor exp(const Tensor& x) {
    return unary(x, "exp", [](double v) {
        const double e = std::exp(v);
        return std::pair{e, e};
    });
}

Tensor log(const Tensor& x) {
    return unary(x, "log", [](double v) { return std::pair{std::log(v), 1.0 / v}; });
}

// ---- activations ---------------------------------------------------------

Tensor activation(Activation tag, const Tensor& x) {
    switch (tag) {
        case Activation::sigmoid: return sigmoid(x);
        case Activation::relu: return relu(x);
        case Activation::gelu: return gelu(x);
    }
    return relu(x);
}

Tensor sigmoid(const Tensor& x) {
    return unary(x, "sigmoid", [](double v) {
        const double s = stable_sigmoid(v);
        return std::pair{s, s * (1.0 - s)};
    });
}

Tensor relu(const Tensor& x) {
    return unary(x, "relu", [](double v) { return v > 0.0 ? std::pair{v, 1.0} : std::pair{0.0, 0.0}; });
}

Tensor gelu(const Tensor& x) {
    return unary(x, "gelu", [](double v) {
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        constexpr double inv_sqrt2pi = 0.39894228040143267794;
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        return std::pair{v * cdf, cdf + v * pdf};
    });
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis_in) {
    const std::size_t axis = normalize_axis(axis_in, x.rank());
    const auto sp = split_at(x.shape(), axis);
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.n * sp.inner + i;
            double mx = xv[base];
            for (std::size_t k = 1; k < sp.n; ++k) mx = std::max(mx, xv[base + k * sp.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < sp.n; ++k) {
                const double e = std::exp(xv[base + k * sp.inner] - mx);
                out[base + k * sp.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] /= total;
        }
    }
    return make_result(x.shape(), std::move(out), {x},
                       [sp](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           const auto& y = self.value;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t i = 0; i < sp.inner; ++i) {
                                   const std::size_t base = o * sp.n * sp.inner + i;
                                   double dot = 0.0;
                                   for (std::size_t k = 0; k < sp.n; ++k) {
                                       const std::size_t j = base + k * sp.inner;
                                       dot += self.grad[j] * y[j];
                                   }
                                   for (std::size_t k = 0; k < sp.n; ++k) {
                                       const std::size_t j = base + k * sp.inner;
                                       gx[j] += y[j] * (self.grad[j] - dot);
                                   }
                               }
                           }
                       },
                       "softmax");
}

Tensor log_softmax(const Tensor& x, std::ptrdiff_t axis_in) {
    const std::size_t axis = normalize_axis(axis_in, x.rank());
    const auto sp = split_at(x.shape(), axis);
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.n * sp.inner + i;
            double mx = xv[base];
            for (std::size_t k = 1; k < sp.n; ++k) mx = std::max(mx, xv[base + k * sp.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < sp.n; ++k) total += std::exp(xv[base + k * sp.inner] - mx);
            const double lse = mx + std::log(total);
            for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] = xv[base + k * sp.inner] - lse;
        }
    }
    return make_result(x.shape(), std::move(out), {x},
                       [sp](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           const auto& y = self.value;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t i = 0; i < sp.inner; ++i) {
                                   const std::size_t base = o * sp.n * sp.inner + i;
                                   double gsum = 0.0;
                                   for (std::size_t k = 0; k < sp.n; ++k) gsum += self.grad[base + k * sp.inner];
                                   for (std::size_t k = 0; k < sp.n; ++k) {
                                       const std::size_t j = base + k * sp.inner;
                                       gx[j] += self.grad[j] - std::exp(y[j]) * gsum;
                                   }
                               }
                           }
                       },
                       "log_softmax");
}

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    kernels::matmul(m, k, n, a.data().data(), b.data().data(), out.data());
    return make_result({m, n}, std::move(out), {a, b},
                       [m, k, n](Node& self) {
                           const auto& av = self.parents[0]->value;
                           const auto& bv = self.parents[1]->value;
                           if (self.parent_needs_grad(0)) {
                               kernels::matmul_a_bt_acc(m, n, k, self.grad.data(), bv.data(),
                                                        self.parents[0]->grad_buffer().data());
                           }
                           if (self.parent_needs_grad(1)) {
                               kernels::matmul_at_b_acc(k, m, n, av.data(), self.grad.data(),
                                                        self.parents[1]->grad_buffer().data());
                           }
                       },
                       "matmul");
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    std::vector<double> out(batch * m * n);
    for (std::size_t i = 0; i < batch; ++i) {
        kernels::matmul(m, k, n, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n);
    }
    return make_result({batch, m, n}, std::move(out), {a, b},
                       [batch, m, k, n](Node& self) {
                           const auto& av = self.parents[0]->value;
                           const auto& bv = self.parents[1]->value;
                           const bool na = self.parent_needs_grad(0), nb = self.parent_needs_grad(1);
                           double* ga = na ? self.parents[0]->grad_buffer().data() : nullptr;
                           double* gb = nb ? self.parents[1]->grad_buffer().data() : nullptr;
                           for (std::size_t i = 0; i < batch; ++i) {
                               const double* g = self.grad.data() + i * m * n;
                               if (ga) kernels::matmul_a_bt_acc(m, n, k, g, bv.data() + i * k * n, ga + i * m * k);
                               if (gb) kernels::matmul_at_b_acc(k, m, n, av.data() + i * m * k, g, gb + i * k * n);
                           }
                       },
                       "bmm");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.rank() != 2 || x.dim(-1) != weight.dim(1)) {
        throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
    }
    const std::size_t in = weight.dim(1), outf = weight.dim(0), rows = x.numel() / in;
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outf)) throw ShapeError("linear: bias shape");
    std::vector<double> out(rows * outf, 0.0);
    kernels::matmul_a_bt_acc(rows, in, outf, x.data().data(), weight.data().data(), out.data());
    if (bias.defined()) {
        const auto bv = bias.data();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < outf; ++j) out[r * outf + j] += bv[j];
    }
    Shape shape = x.shape();
    shape.back() = outf;
    std::vector<Tensor> parents{x, weight};
    const bool has_bias = bias.defined();
    if (has_bias) parents.push_back(bias);
    return make_result(std::move(shape), std::move(out), std::move(parents),
                       [rows, in, outf, has_bias](Node& self) {
                           const auto& xv = self.parents[0]->value;
                           const auto& wv = self.parents[1]->value;
                           if (self.parent_needs_grad(0)) {
                               std::vector<double> tmp(rows * in);
                               kernels::matmul(rows, outf, in, self.grad.data(), wv.data(), tmp.data());
                               auto& gx = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
                           }
                           if (self.parent_needs_grad(1)) {
                               kernels::matmul_at_b_acc(outf, rows, in, self.grad.data(), xv.data(),
                                                        self.parents[1]->grad_buffer().data());
                           }
                           if (has_bias && self.parent_needs_grad(2)) {
                               auto& gb = self.parents[2]->grad_buffer();
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < outf; ++j) gb[j] += self.grad[r * outf + j];
                           }
                       },
                       "linear");
}

// ---- layout --------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), {x},
                       [](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
                       },
                       "reshape");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const std::size_t rank = x.rank();
    if (order.size() != rank) throw ShapeError("permute: order rank mismatch");
    std::vector<bool> seen(rank, false);
    for (auto o : order) {
        if (o >= rank || seen[o]) throw ShapeError("permute: invalid order");
        seen[o] = true;
    }
    const Shape& in = x.shape();
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in[d];
    Shape out_shape(rank);
    std::vector<std::size_t> src_strides(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        out_shape[d] = in[order[d]];
        src_strides[d] = in_strides[order[d]];
    }
    // map[o] = source flat index of output element o
    const std::size_t total = x.numel();
    std::vector<std::size_t> map(total);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < total; ++o) {
        map[o] = src;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            src += src_strides[d];
            if (idx[d] < out_shape[d]) break;
            src -= src_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    const auto xv = x.data();
    std::vector<double> out(total);
    for (std::size_t o = 0; o < total; ++o) out[o] = xv[map[o]];
    return make_result(std::move(out_shape), std::move(out), {x},
                       [map = std::move(map)](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += self.grad[o];
                       },
                       "permute");
}

Tensor transpose(const Tensor& x, std::ptrdiff_t a, std::ptrdiff_t b) {
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[normalize_axis(a, x.rank())], order[normalize_axis(b, x.rank())]);
    return permute(x, order);
}

Tensor concat(std::span<const Tensor> parts, std::ptrdiff_t axis_in) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const std::size_t rank = parts[0].rank();
    const std::size_t axis = normalize_axis(axis_in, rank);
    Shape out_shape = parts[0].shape();
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && p.dim(d) != parts[0].dim(d)) {
                throw ShapeError("concat: shape mismatch " + to_string(p.shape()) + " vs " + to_string(parts[0].shape()));
            }
        }
        out_shape[axis] += p.dim(axis);
    }
    const auto sp = split_at(out_shape, axis);
    std::vector<double> out(numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        offsets.push_back(offset);
        const std::size_t chunk = p.dim(axis) * sp.inner;
        const auto pv = p.data();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            std::copy_n(pv.begin() + o * chunk, chunk, out.begin() + o * sp.n * sp.inner + offset * sp.inner);
        }
        offset += p.dim(axis);
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    return make_result(std::move(out_shape), std::move(out), std::move(parents),
                       [sp, offsets](Node& self) {
                           for (std::size_t i = 0; i < self.parents.size(); ++i) {
                               if (!self.parent_needs_grad(i)) continue;
                               auto& gp = self.parents[i]->grad_buffer();
                               const std::size_t chunk = gp.size() / sp.outer;
                               for (std::size_t o = 0; o < sp.outer; ++o) {
                                   const double* src = self.grad.data() + o * sp.n * sp.inner + offsets[i] * sp.inner;
                                   double* dst = gp.data() + o * chunk;
                                   for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
                               }
                           }
                       },
                       "concat");
}

Tensor concat(std::initializer_list<Tensor> parts, std::ptrdiff_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& x, std::ptrdiff_t axis_in, std::size_t start, std::size_t length) {
    const std::size_t axis = normalize_axis(axis_in, x.rank());
    if (length == 0 || start + length > x.dim(axis)) throw ShapeError("slice: range out of bounds");
    const auto sp = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    const std::size_t chunk = length * sp.inner;
    const auto xv = x.data();
    std::vector<double> out(sp.outer * chunk);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        std::copy_n(xv.begin() + o * sp.n * sp.inner + start * sp.inner, chunk, out.begin() + o * chunk);
    }
    return make_result(std::move(out_shape), std::move(out), {x},
                       [sp, start, chunk](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               double* dst = gx.data() + o * sp.n * sp.inner + start * sp.inner;
                               const double* src = self.grad.data() + o * chunk;
                               for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
                           }
                       },
                       "slice");
}

Tensor pad(const Tensor& x, std::ptrdiff_t axis_in, std::size_t before, std::size_t after) {
    const std::size_t axis = normalize_axis(axis_in, x.rank());
    const auto sp = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] += before + after;
    const std::size_t out_n = out_shape[axis];
    const std::size_t chunk = sp.n * sp.inner;
    const auto xv = x.data();
    std::vector<double> out(sp.outer * out_n * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        std::copy_n(xv.begin() + o * chunk, chunk, out.begin() + o * out_n * sp.inner + before * sp.inner);
    }
    return make_result(std::move(out_shape), std::move(out), {x},
                       [sp, out_n, before, chunk](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               const double* src = self.grad.data() + o * out_n * sp.inner + before * sp.inner;
                               double* dst = gx.data() + o * chunk;
                               for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
                           }
                       },
                       "pad");
}

Tensor roll(const Tensor& x, std::ptrdiff_t shift, std::ptrdiff_t axis_in) {
    const std::size_t axis = normalize_axis(axis_in, x.rank());
    const auto sp = split_at(x.shape(), axis);
    const auto n = static_cast<std::ptrdiff_t>(sp.n);
    const std::size_t s = static_cast<std::size_t>(((shift % n) + n) % n);
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.n; ++j) {
            const std::size_t src = (j + s) % sp.n;
            std::copy_n(xv.begin() + (o * sp.n + src) * sp.inner, sp.inner, out.begin() + (o * sp.n + j) * sp.inner);
        }
    }
    return make_result(x.shape(), std::move(out), {x},
                       [sp, s](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t j = 0; j < sp.n; ++j) {
                                   const std::size_t src = (j + s) % sp.n;
                                   const double* g = self.grad.data() + (o * sp.n + j) * sp.inner;
                                   double* dst = gx.data() + (o * sp.n + src) * sp.inner;
                                   for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += g[i];
                               }
                           }
                       },
                       "roll");
}

// ---- reductions ----------------------------------------------------------

namespace {

Tensor reduce_axis(ReduceOp op, const Tensor& x, std::size_t axis) {
    const auto sp = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = 1;
    const auto xv = x.data();
    std::vector<double> out(sp.outer * sp.inner);
    std::vector<std::size_t> arg;
    if (op == ReduceOp::max) arg.resize(out.size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.n * sp.inner + i;
            if (op == ReduceOp::max) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < sp.n; ++k) {
                    if (xv[base + k * sp.inner] > xv[base + best * sp.inner]) best = k;
                }
                out[o * sp.inner + i] = xv[base + best * sp.inner];
                arg[o * sp.inner + i] = best;
            } else {
                double acc = 0.0;
                for (std::size_t k = 0; k < sp.n; ++k) acc += xv[base + k * sp.inner];
                out[o * sp.inner + i] = op == ReduceOp::mean ? acc / static_cast<double>(sp.n) : acc;
            }
        }
    }
    return make_result(std::move(out_shape), std::move(out), {x},
                       [op, sp, arg = std::move(arg)](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(sp.n) : 1.0;
                           for (std::size_t o = 0; o < sp.outer; ++o) {
                               for (std::size_t i = 0; i < sp.inner; ++i) {
                                   const double g = self.grad[o * sp.inner + i];
                                   const std::size_t base = o * sp.n * sp.inner + i;
                                   if (op == ReduceOp::max) {
                                       gx[base + arg[o * sp.inner + i] * sp.inner] += g;
                                   } else {
                                       for (std::size_t k = 0; k < sp.n; ++k) gx[base + k * sp.inner] += g * scale;
                                   }
                               }
                           }
                       },
                       op == ReduceOp::max ? "reduce_max" : "reduce_sum");
}

}  // namespace

Tensor reduce(ReduceOp op, const Tensor& x, std::vector<std::ptrdiff_t> axes_in, bool keepdim) {
    if (axes_in.empty()) throw ShapeError("reduce: empty axis list");
    std::vector<std::size_t> axes;
    for (auto a : axes_in) axes.push_back(normalize_axis(a, x.rank()));
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    Tensor y = x;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) y = reduce_axis(op, y, *it);
    if (keepdim) return y;
    Shape squeezed;
    for (std::size_t d = 0; d < x.rank(); ++d) {
        if (!std::binary_search(axes.begin(), axes.end(), d)) squeezed.push_back(x.dim(d));
    }
    if (squeezed.empty()) squeezed.push_back(1);
    return reshape(y, std::move(squeezed));
}

Tensor sum(const Tensor& x) {
    std::vector<std::ptrdiff_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), 0);
    return reduce(ReduceOp::sum, x, axes);
}

Tensor mean(const Tensor& x) {
    const double n = static_cast<double>(x.numel());
    return sum(x) * (1.0 / n);
}

ArgmaxResult max_with_argmax(const Tensor& x, std::ptrdiff_t axis_in, bool keepdim) {
    const std::size_t axis = normalize_axis(axis_in, x.rank());
    const auto sp = split_at(x.shape(), axis);
    const auto xv = x.data();
    std::vector<std::size_t> idx(sp.outer * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.n * sp.inner + i;
            std::size_t best = 0;
            for (std::size_t k = 1; k < sp.n; ++k) {
                if (xv[base + k * sp.inner] > xv[base + best * sp.inner]) best = k;
            }
            idx[o * sp.inner + i] = best;
        }
    }
    return {reduce(ReduceOp::max, x, {static_cast<std::ptrdiff_t>(axis)}, keepdim), std::move(idx)};
}

// ---- spatial -------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& opt) {
    if (x.rank() != 4 || kernel.rank() != 4) throw ShapeError("conv2d: expects 4-D input and kernel");
    if (x.dim(1) != kernel.dim(1)) {
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " vs kernel " + to_string(kernel.shape()));
    }
    if (kernel.dim(2) % 2 == 0 || kernel.dim(3) % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
    if (opt.stride == 0) throw ShapeError("conv2d: stride must be positive");
    kernels::ConvGeometry g;
    g.batch = x.dim(0);
    g.in_channels = x.dim(1);
    g.height = x.dim(2);
    g.width = x.dim(3);
    g.out_channels = kernel.dim(0);
    g.kernel_h = kernel.dim(2);
    g.kernel_w = kernel.dim(3);
    g.stride = opt.stride;
    g.pad_h = opt.pad_h;
    g.pad_w = opt.pad_w;
    g.padding = opt.padding;
    if (g.kernel_h > g.padded_h() || g.kernel_w > g.padded_w()) {
        throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input");
    }
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) throw ShapeError("conv2d: bias shape");
    std::vector<double> out(g.batch * g.out_channels * g.out_h() * g.out_w());
    kernels::conv2d_forward(g, x.data().data(), kernel.data().data(), has_bias ? bias.data().data() : nullptr,
                            out.data());
    std::vector<Tensor> parents{x, kernel};
    if (has_bias) parents.push_back(bias);
    return make_result({g.batch, g.out_channels, g.out_h(), g.out_w()}, std::move(out), std::move(parents),
                       [g, has_bias](Node& self) {
                           const auto& xv = self.parents[0]->value;
                           const auto& wv = self.parents[1]->value;
                           if (self.parent_needs_grad(0)) {
                               kernels::conv2d_backward_input(g, self.grad.data(), wv.data(),
                                                              self.parents[0]->grad_buffer().data());
                           }
                           const bool nw = self.parent_needs_grad(1);
                           const bool nb = has_bias && self.parent_needs_grad(2);
                           if (nw || nb) {
                               std::vector<double> scratch_w;
                               double* gw;
                               if (nw) {
                                   gw = self.parents[1]->grad_buffer().data();
                               } else {
                                   scratch_w.assign(wv.size(), 0.0);
                                   gw = scratch_w.data();
                               }
                               double* gb = nb ? self.parents[2]->grad_buffer().data() : nullptr;
                               kernels::conv2d_backward_weight(g, self.grad.data(), xv.data(), gw, gb);
                           }
                       },
                       "conv2d");
}

Tensor interpolate_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 4) throw ShapeError("interpolate_bilinear: expects 4-D input");
    if (out_h == 0 || out_w == 0) throw ShapeError("interpolate_bilinear: output extents must be positive");
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    std::vector<double> out(planes * out_h * out_w);
    kernels::bilinear_forward(planes, h, w, out_h, out_w, x.data().data(), out.data());
    return make_result({x.dim(0), x.dim(1), out_h, out_w}, std::move(out), {x},
                       [planes, h, w, out_h, out_w](Node& self) {
                           kernels::bilinear_backward(planes, h, w, out_h, out_w, self.grad.data(),
                                                      self.parents[0]->grad_buffer().data());
                       },
                       "interpolate_bilinear");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const std::size_t d = x.dim(-1);
    if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm: parameter size mismatch");
    const std::size_t rows = x.numel() / d;
    const auto xv = x.data();
    const auto gv = gamma.data();
    const auto bv = beta.data();
    std::vector<double> out(xv.size()), xhat(xv.size()), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += row[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) {
            xhat[r * d + i] = (row[i] - mu) * inv_std[r];
            out[r * d + i] = xhat[r * d + i] * gv[i] + bv[i];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gamma, beta},
                       [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const auto& gv = self.parents[1]->value;
                           const bool nx = self.parent_needs_grad(0);
                           double* gx = nx ? self.parents[0]->grad_buffer().data() : nullptr;
                           double* gg = self.parent_needs_grad(1) ? self.parents[1]->grad_buffer().data() : nullptr;
                           double* gb = self.parent_needs_grad(2) ? self.parents[2]->grad_buffer().data() : nullptr;
                           const double inv_d = 1.0 / static_cast<double>(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* g = self.grad.data() + r * d;
                               const double* xh = xhat.data() + r * d;
                               double mean_g = 0.0, mean_gx = 0.0;
                               for (std::size_t i = 0; i < d; ++i) {
                                   const double gh = g[i] * gv[i];
                                   mean_g += gh;
                                   mean_gx += gh * xh[i];
                                   if (gg) gg[i] += g[i] * xh[i];
                                   if (gb) gb[i] += g[i];
                               }
                               mean_g *= inv_d;
                               mean_gx *= inv_d;
                               if (gx) {
                                   for (std::size_t i = 0; i < d; ++i) {
                                       gx[r * d + i] += inv_std[r] * (g[i] * gv[i] - mean_g - xh[i] * mean_gx);
                                   }
                               }
                           }
                       },
                       "layer_norm");
}

namespace detail {

Tensor flip_gradient(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(x.shape(), std::move(out), {x},
                       [](Node& self) {
                           auto& gx = self.parents[0]->grad_buffer();
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] -= self.grad[i];
                       },
                       "flip_gradient");
}

}  // namespace detail

}  // namespace panoseg::nn
