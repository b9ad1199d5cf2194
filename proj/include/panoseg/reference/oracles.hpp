#pragma once

// Brute-force oracles written directly from the operation definitions, with
// no shared code paths with the production implementations.

#include <cstddef>
#include <vector>

#include "panoseg/fusion.hpp"
#include "panoseg/grid.hpp"
#include "panoseg/numerics/kernels.hpp"
#include "panoseg/numerics/tensor.hpp"
#include "panoseg/refinement.hpp"

namespace panoseg::reference {

// Materializes the padded input explicitly, then runs an unpadded direct convolution.
std::vector<double> conv2d_padded_oracle(const nn::Tensor& x, const nn::Tensor& kernel, const nn::Tensor& bias,
                                         std::size_t stride, nn::PaddingMode mode, std::size_t pad_h, std::size_t pad_w);

std::vector<double> bilinear_oracle(const nn::Tensor& x, std::size_t out_h, std::size_t out_w);

// x[b,c,h,w] -> [b,c] channel attention of the whole map.
std::vector<double> channel_attention_oracle(const nn::Tensor& x, const fusion::ChannelMLP& mlp);

std::vector<double> cbam_oracle(const nn::Tensor& x, const fusion::CBAMParams& params);

// For every pixel: enumerate each window containing it, evaluate that
// window's attention from scratch, and apply the max/sum aggregation rules.
std::vector<double> mcbam_oracle(const nn::Tensor& x, const fusion::MCBAMConfig& cfg, const fusion::CBAMParams& params);

// Every pixel takes the modal initial class of the highest-priority
// instance covering it.
LabelMap refine_semantics_oracle(const LabelMap& initial, const std::vector<refinement::InstanceMask>& instances);

// Per-pixel search over all (mask, class) pairs.
LabelMap fuse_scores_oracle(const std::vector<refinement::ScoredClassMask>& masks, std::size_t height, std::size_t width,
                            const refinement::ScoreFusionOptions& options);

// Union-find labelling, ids renumbered in raster order of first appearance.
Grid<std::int32_t> components_oracle(const LabelMap& labels);

// Linear-interpolation percentile of a sorted copy.
double percentile_oracle(std::vector<double> values, double q);

}  // namespace panoseg::reference
