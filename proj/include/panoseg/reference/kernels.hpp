#pragma once

// Serial, direct-formula versions of the dense kernels. Same signatures and
// results as panoseg/numerics/kernels.hpp; used as test oracles and as the
// benchmark baseline.

#include <cstddef>

#include "panoseg/numerics/kernels.hpp"

namespace panoseg::reference::kernels {

using nn::kernels::ConvGeometry;

void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
void matmul_at_b_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
void matmul_a_bt_acc(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);

void conv2d_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* out);
void conv2d_backward_input(const ConvGeometry& g, const double* gout, const double* w, double* gx);
void conv2d_backward_weight(const ConvGeometry& g, const double* gout, const double* x, double* gw, double* gb);

void bilinear_forward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h, std::size_t out_w,
                      const double* x, double* out);
void bilinear_backward(std::size_t planes, std::size_t h, std::size_t w, std::size_t out_h, std::size_t out_w,
                       const double* gout, double* gx);

}  // namespace panoseg::reference::kernels
