#include "viteraser/segmim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "viteraser/errors.hpp"
#include "viteraser/layers.hpp"
#include "viteraser/losses.hpp"
#include "viteraser/random.hpp"

namespace viteraser {

std::int64_t MimMask::masked_patches() const {
  const auto grid = mask.slice(2, 0, std::nullopt, patch).slice(3, 0, std::nullopt, patch);
  return grid.sum().item<std::int64_t>();
}

MimMask generate_mim_mask(std::int64_t h, std::int64_t w, double ratio, std::int64_t patch,
                          std::uint64_t seed) {
  if (patch <= 0) throw ValueError("generate_mim_mask: patch must be positive");
  if (h <= 0 || w <= 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("generate_mim_mask: " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by patch " + std::to_string(patch));
  }
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValueError("generate_mim_mask: ratio must be in [0, 1]");
  const auto gh = h / patch, gw = w / patch;
  const auto total = gh * gw;
  const auto count = static_cast<std::int64_t>(std::llround(ratio * static_cast<double>(total)));

  // Partial Fisher-Yates: the first `count` entries are the masked patches.
  std::vector<std::int64_t> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::int64_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total - i)));
    std::swap(order[i], order[j]);
  }
  auto grid = torch::zeros({total}, torch::kFloat32);
  auto* g = grid.data_ptr<float>();
  for (std::int64_t i = 0; i < count; ++i) g[order[i]] = 1.0f;

  MimMask m;
  m.patch = patch;
  m.ratio = ratio;
  m.mask = grid.view({1, 1, gh, gw})
               .repeat_interleave(patch, 2)
               .repeat_interleave(patch, 3)
               .contiguous();
  return m;
}

torch::Tensor apply_mask(const torch::Tensor& image, const torch::Tensor& mask) {
  if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(2) != image.size(2) ||
      mask.size(3) != image.size(3) || (mask.size(0) != 1 && mask.size(0) != image.size(0))) {
    throw ShapeError("apply_mask: mask " + c10::str(mask.sizes()) + " does not match image " +
                     c10::str(image.sizes()));
  }
  return image.masked_fill(mask.gt(0.5), 0.0);
}

SegHeadImpl::SegHeadImpl(std::int64_t in) : in_channels(in) {
  proj = register_module("proj", conv1x1(in, 1024));
  init_conv_weights(*this);
}

torch::Tensor SegHeadImpl::forward(const torch::Tensor& f4) {
  if (f4.dim() != 4 || f4.size(1) != in_channels) {
    throw ShapeError("seg_head: expected (B, " + std::to_string(in_channels) + ", h, w), got " +
                     c10::str(f4.sizes()));
  }
  return torch::sigmoid(torch::pixel_shuffle(proj(f4), 32));
}

ReconHeadImpl::ReconHeadImpl(std::int64_t in) : in_channels(in) {
  proj = register_module("proj", conv3x3(in, 3));
  init_conv_weights(*this);
}

torch::Tensor ReconHeadImpl::forward(const torch::Tensor& f5) {
  if (f5.dim() != 4 || f5.size(1) != in_channels) {
    throw ShapeError("recon_head: expected (B, " + std::to_string(in_channels) + ", H, W), got " +
                     c10::str(f5.sizes()));
  }
  return proj(f5);
}

torch::Tensor mim_loss(const torch::Tensor& target, const torch::Tensor& reconstruction,
                       const torch::Tensor& mask) {
  if (!target.sizes().equals(reconstruction.sizes())) {
    throw ShapeError("mim_loss: shape mismatch " + c10::str(target.sizes()) + " vs " +
                     c10::str(reconstruction.sizes()));
  }
  if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(2) != target.size(2) ||
      mask.size(3) != target.size(3)) {
    throw ShapeError("mim_loss: mask " + c10::str(mask.sizes()) + " does not match image");
  }
  const auto selected = mask.gt(0.5).expand_as(target);
  const auto diff = torch::masked_select((reconstruction - target).abs(), selected);
  if (diff.numel() == 0) throw ValueError("mim_loss: no masked pixels");
  return diff.mean();
}

PretrainLoss pretrain_loss(const torch::Tensor& segmentation, const torch::Tensor& seg_target,
                           const torch::Tensor& target, const torch::Tensor& reconstruction,
                           const torch::Tensor& mask) {
  PretrainLoss out;
  out.dice = dice_loss(segmentation, seg_target);
  out.mim = mim_loss(target, reconstruction, mask);
  out.total = out.dice + out.mim;
  return out;
}

torch::Tensor rasterize_polygons(std::int64_t h, std::int64_t w, const std::vector<Polygon>& polygons) {
  auto out = torch::zeros({1, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  std::vector<double> crossings;
  for (const auto& poly : polygons) {
    if (poly.size() < 6 || poly.size() % 2 != 0) {
      throw DataError("polygon needs at least three (x, y) points");
    }
    const auto n = poly.size() / 2;
    for (std::int64_t y = 0; y < h; ++y) {
      const double cy = static_cast<double>(y) + 0.5;
      crossings.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const double x0 = poly[2 * i], y0 = poly[2 * i + 1];
        const double x1 = poly[2 * ((i + 1) % n)], y1 = poly[2 * ((i + 1) % n) + 1];
        if ((y0 <= cy && y1 > cy) || (y1 <= cy && y0 > cy)) {
          crossings.push_back(x0 + (cy - y0) / (y1 - y0) * (x1 - x0));
        }
      }
      std::sort(crossings.begin(), crossings.end());
      for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
        // Pixel centres x + 0.5 inside [left, right).
        const auto first = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(crossings[k] - 0.5)));
        const auto last = std::min<std::int64_t>(w, static_cast<std::int64_t>(std::ceil(crossings[k + 1] - 0.5)));
        for (auto x = first; x < last; ++x) acc[0][y][x] = 1.0f;
      }
    }
  }
  return out;
}

}  // namespace viteraser
