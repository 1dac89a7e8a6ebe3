#include "viteraser/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <filesystem>

#include "viteraser/errors.hpp"

namespace fs = std::filesystem;

namespace viteraser {

Image8 read_png(const std::string& path, int channels) {
  if (channels != 1 && channels != 3) throw ValueError("read_png: channels must be 1 or 3");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DataError("cannot read image '" + path + "': " + img.message);
  }
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out(img.height, img.width, channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw DataError("cannot decode image '" + path + "': " + img.message);
  }
  return out;
}

void write_png(const std::string& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ValueError("write_png: channels must be 1 or 3");
  }
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write image '" + path + "': " + img.message);
  }
}

torch::Tensor to_tensor(const Image8& image) {
  auto t = torch::from_blob(const_cast<std::uint8_t*>(image.pixels.data()),
                            {image.height, image.width, image.channels}, torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

Image8 to_image8(const torch::Tensor& image) {
  auto t = image.detach().to(torch::kCPU);
  if (t.dim() == 4 && t.size(0) == 1) t = t.squeeze(0);
  if (t.dim() != 3) throw ShapeError("to_image8: expected (C, H, W), got " + c10::str(image.sizes()));
  auto q = t.to(torch::kFloat64).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
  q = q.permute({1, 2, 0}).contiguous();
  Image8 out(t.size(1), t.size(2), t.size(0));
  std::copy_n(q.data_ptr<std::uint8_t>(), out.pixels.size(), out.pixels.begin());
  return out;
}

std::vector<std::string> list_png(const std::string& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) throw DataError("not a directory: '" + dir + "'");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace viteraser
