#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace viteraser {

// 8-bit raster, row-major, channels interleaved (HWC).
struct Image8 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::int64_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::int64_t h, std::int64_t w, std::int64_t c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h * w * c), fill) {}

  std::uint8_t& at(std::int64_t y, std::int64_t x, std::int64_t c = 0) {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t c = 0) const {
    return pixels[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  bool same_shape(const Image8& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

// PNG codec. `channels` is 3 (RGB) or 1 (gray); the file is converted on read.
Image8 read_png(const std::string& path, int channels = 3);
void write_png(const std::string& path, const Image8& image);

// (C, H, W) float32 in [0, 1].
torch::Tensor to_tensor(const Image8& image);
// Accepts (C, H, W) or (1, C, H, W); clamps to [0, 1] and rounds to 8 bits.
Image8 to_image8(const torch::Tensor& image);

// Sorted list of *.png file names (no directories) in `dir`.
std::vector<std::string> list_png(const std::string& dir);

}  // namespace viteraser
