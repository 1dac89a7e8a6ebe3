#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "viteraser/layers.hpp"

namespace viteraser {

// Random patch mask for masked image modeling. `mask` is (1, 1, H, W) with
// 1 at masked pixels; it is constant on every aligned patch x patch block.
struct MimMask {
  torch::Tensor mask;
  std::int64_t patch = 32;
  double ratio = 0.6;

  std::int64_t masked_patches() const;
};

// Masks round(ratio * num_patches) patches chosen uniformly without
// replacement. Deterministic in `seed`.
MimMask generate_mim_mask(std::int64_t h, std::int64_t w, double ratio, std::int64_t patch,
                          std::uint64_t seed);

// Zeroes masked pixels. image: (B, 3, H, W); mask: (B or 1, 1, H, W).
torch::Tensor apply_mask(const torch::Tensor& image, const torch::Tensor& mask);

// 1x1 conv to 1024 channels on the stride-32 encoder map, each 1024-vector
// unfolded row-major into a 32 x 32 pixel patch, then sigmoid.
struct SegHeadImpl : torch::nn::Module {
  explicit SegHeadImpl(std::int64_t in_channels);
  torch::Tensor forward(const torch::Tensor& f4);

  std::int64_t in_channels;
  Conv proj{nullptr};
};
TORCH_MODULE(SegHead);

// 3x3 conv to RGB on the full-resolution decoder map.
struct ReconHeadImpl : torch::nn::Module {
  explicit ReconHeadImpl(std::int64_t in_channels);
  torch::Tensor forward(const torch::Tensor& f5);

  std::int64_t in_channels;
  Conv proj{nullptr};
};
TORCH_MODULE(ReconHead);

// Mean absolute error over masked pixels only. Throws ValueError when the
// mask selects nothing.
torch::Tensor mim_loss(const torch::Tensor& target, const torch::Tensor& reconstruction,
                       const torch::Tensor& mask);

struct PretrainLoss {
  torch::Tensor dice;
  torch::Tensor mim;
  torch::Tensor total;  // dice + mim, unweighted
};

PretrainLoss pretrain_loss(const torch::Tensor& segmentation, const torch::Tensor& seg_target,
                           const torch::Tensor& target, const torch::Tensor& reconstruction,
                           const torch::Tensor& mask);

// Polygon in pixel coordinates (x0, y0, x1, y1, ...).
using Polygon = std::vector<double>;

// Fills polygons (even-odd rule, sampled at pixel centres) into a
// (1, H, W) {0, 1} mask.
torch::Tensor rasterize_polygons(std::int64_t h, std::int64_t w, const std::vector<Polygon>& polygons);

}  // namespace viteraser
