#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "panoseg/numerics/kernels.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::nn {

// ---- elementwise ---------------------------------------------------------

enum class BinaryOp { add, sub, mul, div, max, min };

// Right-aligned broadcasting: every dim of either operand must match the
// other's aligned dim or be 1; missing leading dims count as 1. Ties in
// max/min send the gradient to `a`.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double b);
Tensor operator-(const Tensor& a, double b);
Tensor operator*(const Tensor& a, double b);
Tensor operator/(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(double a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

// ---- activations ---------------------------------------------------------

enum class Activation { sigmoid, relu, gelu };

Tensor activation(Activation tag, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, std::ptrdiff_t axis);
Tensor log_softmax(const Tensor& x, std::ptrdiff_t axis);

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor bmm(const Tensor& a, const Tensor& b);     // [B,m,k] x [B,k,n]
// x[..., in] * weight[out, in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---- layout --------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::ptrdiff_t a, std::ptrdiff_t b);
Tensor concat(std::span<const Tensor> parts, std::ptrdiff_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::ptrdiff_t axis);
Tensor slice(const Tensor& x, std::ptrdiff_t axis, std::size_t start, std::size_t length);
// Zero padding along one axis; the adjoint of slice.
Tensor pad(const Tensor& x, std::ptrdiff_t axis, std::size_t before, std::size_t after);
// out[..., j, ...] = x[..., (j + shift) mod n, ...] along `axis`.
Tensor roll(const Tensor& x, std::ptrdiff_t shift, std::ptrdiff_t axis);

// ---- reductions ----------------------------------------------------------

enum class ReduceOp { sum, mean, max };

Tensor reduce(ReduceOp op, const Tensor& x, std::vector<std::ptrdiff_t> axes, bool keepdim = false);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

struct ArgmaxResult {
    Tensor values;
    std::vector<std::size_t> indices;  // same layout as values, lowest index wins ties
};
ArgmaxResult max_with_argmax(const Tensor& x, std::ptrdiff_t axis, bool keepdim = false);

// ---- spatial -------------------------------------------------------------

struct Conv2dOptions {
    std::size_t stride = 1;
    PaddingMode padding = PaddingMode::zero;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;

    // Padding that keeps the spatial size for an odd kernel at stride 1.
    static Conv2dOptions same(std::size_t kh, std::size_t kw, PaddingMode mode = PaddingMode::zero) {
        return {1, mode, (kh - 1) / 2, (kw - 1) / 2};
    }
};

// x[b,cin,h,w], kernel[cout,cin,kh,kw], bias[cout] (may be undefined). Spherical
// padding wraps columns and zero-pads rows.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, const Conv2dOptions& opt);

// Resize of the last two dims of x[b,c,h,w], half-pixel centres, clamped.
Tensor interpolate_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Normalizes over the last dim.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

namespace detail {
// Identity forward with a negated backward. Only used to inject faults into
// the verification harness.
Tensor flip_gradient(const Tensor& x);
}  // namespace detail

}  // namespace panoseg::nn
