#pragma once

// Dense inner loops behind the tensor ops. Parallel loops are distributed
// over disjoint outputs only, so results are bit-identical for any thread
// count. Serial reference versions with the same signatures live in
// panoseg/reference/kernels.hpp.

#include <cstddef>

namespace panoseg::nn {

enum class PaddingMode { zero, spherical };

namespace kernels {

struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
    PaddingMode padding = PaddingMode::zero;

    std::size_t padded_h() const { return height + 2 * pad_h; }
    std::size_t padded_w() const { return width + 2 * pad_w; }
    std::size_t out_h() const { return (padded_h() - kernel_h) / stride + 1; }
    std::size_t out_w() const { return (padded_w() - kernel_w) / stride + 1; }
};

// c[m,n] = a[m,k] * b[k,n]
void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
            double* c);
// c[m,n] += a[k,m]^T * b[k,n]
void matmul_at_b_acc(std::size_t m, std::size_t k, std::size_t n, const double* a,
                     const double* b, double* c);
// c[m,n] += a[m,k] * b[n,k]^T
void matmul_a_bt_acc(std::size_t m, std::size_t k, std::size_t n, const double* a,
                     const double* b, double* c);

// out[b,co,oy,ox]; bias may be null.
void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias,
                    double* out);
// Accumulates into gx.
void conv2d_backward_input(const ConvGeometry& g, const double* gout, const double* w,
                           double* gx);
// Accumulates into gw and (if non-null) gb.
void conv2d_backward_weight(const ConvGeometry& g, const double* gout, const double* x,
                            double* gw, double* gb);

// Bilinear resize of `planes` independent h*w planes, half-pixel centres.
void bilinear_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h,
                      std::size_t out_w, const double* x, double* out);
// Accumulates into gx.
void bilinear_backward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h,
                       std::size_t out_w, const double* gout, double* gx);

}  // namespace kernels
}  // namespace panoseg::nn
