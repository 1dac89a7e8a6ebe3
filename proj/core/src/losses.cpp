#include "viteraser/losses.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "viteraser/errors.hpp"

namespace viteraser {

namespace F = torch::nn::functional;

torch::Tensor resize_area(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.size(2) == h && x.size(3) == w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{h, w})
                               .mode(torch::kArea));
}

torch::Tensor resize_mask(const torch::Tensor& mask, std::int64_t h, std::int64_t w) {
  if (mask.size(2) == h && mask.size(3) == w) return mask;
  return resize_area(mask, h, w).ge(0.5).to(mask.dtype());
}

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw ShapeError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                     c10::str(b.sizes()));
  }
}

void check_mask_for(const torch::Tensor& image, const torch::Tensor& mask, const char* what) {
  if (mask.dim() != 4 || mask.size(1) != 1 || mask.size(0) != image.size(0) ||
      mask.size(2) != image.size(2) || mask.size(3) != image.size(3)) {
    throw ShapeError(std::string(what) + ": mask " + c10::str(mask.sizes()) +
                     " does not match image " + c10::str(image.sizes()));
  }
}

}  // namespace

torch::Tensor msr_loss(const MultiScaleImages& outputs, const torch::Tensor& target,
                       const torch::Tensor& mask, const LossWeights& weights) {
  check_same_shape(outputs.full, target, "msr_loss");
  check_mask_for(target, mask, "msr_loss");
  const torch::Tensor* scaled[3] = {&outputs.quarter, &outputs.half, &outputs.full};
  auto loss = torch::zeros({}, target.options());
  for (int i = 0; i < 3; ++i) {
    const auto& pred = *scaled[i];
    if (!pred.defined()) continue;
    const auto h = pred.size(2), w = pred.size(3);
    const auto gt = resize_area(target, h, w);
    const auto m = resize_mask(mask, h, w);
    check_same_shape(pred, gt, "msr_loss");
    const auto residual = (pred - gt).abs();
    loss = loss + weights.lambda[i] * (residual * m).mean() +
           weights.beta[i] * (residual * (1.0 - m)).mean();
  }
  return loss;
}

torch::Tensor composite_image(const torch::Tensor& output, const torch::Tensor& input,
                              const torch::Tensor& mask) {
  check_same_shape(output, input, "composite_image");
  check_mask_for(output, mask, "composite_image");
  return output * mask + input * (1.0 - mask);
}

FeatureExtractorImpl::FeatureExtractorImpl(std::array<std::int64_t, 3> widths, std::uint64_t seed) {
  build(widths);
  auto gen = at::detail::createCPUGenerator(seed);
  torch::NoGradGuard no_grad;
  for (auto& conv : convs_) {
    const auto fan_in = conv->weight.numel() / conv->weight.size(0);
    conv->weight.copy_(torch::randn(conv->weight.sizes(), gen, torch::kFloat32) *
                       std::sqrt(2.0 / static_cast<double>(fan_in)));
    conv->bias.zero_();
  }
  freeze();
}

void FeatureExtractorImpl::build(std::array<std::int64_t, 3> widths) {
  widths_ = widths;
  const std::int64_t layout[3] = {2, 2, 3};
  std::int64_t in = 3;
  for (int block = 0; block < 3; ++block) {
    for (int j = 0; j < layout[block]; ++j) {
      auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, widths[block], 3).padding(1));
      convs_.push_back(register_module(
          "conv" + std::to_string(block + 1) + "_" + std::to_string(j + 1), conv));
      in = widths[block];
    }
  }
}

void FeatureExtractorImpl::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();
}

std::array<torch::Tensor, 3> FeatureExtractorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ShapeError("feature extractor expects (B, 3, H, W), got " + c10::str(image.sizes()));
  }
  if (image.size(2) < kMinInputSize || image.size(3) < kMinInputSize) {
    throw ShapeError("feature extractor needs inputs of at least " +
                     std::to_string(kMinInputSize) + "x" + std::to_string(kMinInputSize));
  }
  const auto mean = torch::tensor({0.485, 0.456, 0.406}, image.options()).view({1, 3, 1, 1});
  const auto std = torch::tensor({0.229, 0.224, 0.225}, image.options()).view({1, 3, 1, 1});
  auto x = (image - mean) / std;
  std::array<torch::Tensor, 3> taps;
  const int layout[3] = {2, 2, 3};
  std::size_t layer = 0;
  for (int block = 0; block < 3; ++block) {
    for (int j = 0; j < layout[block]; ++j) x = torch::relu(convs_[layer++](x));
    x = torch::max_pool2d(x, 2);
    taps[block] = x;
  }
  return taps;
}

namespace {

constexpr char kExtractorMagic[4] = {'V', 'X', 'F', 'W'};
constexpr std::uint32_t kExtractorVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint64_t read_uint(std::istream& in, int bytes, const std::string& path) {
  unsigned char b[8] = {};
  if (!in.read(reinterpret_cast<char*>(b), bytes)) {
    throw DataError("extractor weights file is truncated: " + path);
  }
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

// Layout: "VXFW", u32 version, u32 array count, then per array u32 ndim,
// ndim x u64 dims and float32 values; all little-endian. Arrays are
// (weight, bias) for each conv in order.
void FeatureExtractorImpl::save_weights(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write extractor weights: " + path);
  out.write(kExtractorMagic, 4);
  write_u32(out, kExtractorVersion);
  write_u32(out, static_cast<std::uint32_t>(convs_.size() * 2));
  for (const auto& conv : convs_) {
    for (const auto& t : {conv->weight, conv->bias}) {
      const auto data = t.detach().to(torch::kFloat32).contiguous();
      write_u32(out, static_cast<std::uint32_t>(data.dim()));
      for (auto d : data.sizes()) write_u64(out, static_cast<std::uint64_t>(d));
      const auto* p = data.data_ptr<float>();
      for (std::int64_t i = 0; i < data.numel(); ++i) write_u32(out, std::bit_cast<std::uint32_t>(p[i]));
    }
  }
}

std::shared_ptr<FeatureExtractorImpl> FeatureExtractorImpl::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open extractor weights: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kExtractorMagic, 4)) {
    throw DataError("not an extractor weights file: " + path);
  }
  if (read_uint(in, 4, path) != kExtractorVersion) {
    throw DataError("unsupported extractor weights version: " + path);
  }
  const auto count = read_uint(in, 4, path);
  std::vector<torch::Tensor> arrays;
  for (std::uint64_t a = 0; a < count; ++a) {
    const auto ndim = read_uint(in, 4, path);
    if (ndim > 8) throw DataError("corrupt extractor weights file: " + path);
    std::vector<std::int64_t> dims;
    for (std::uint64_t d = 0; d < ndim; ++d) dims.push_back(static_cast<std::int64_t>(read_uint(in, 8, path)));
    auto t = torch::empty(dims, torch::kFloat32);
    auto* p = t.data_ptr<float>();
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      p[i] = std::bit_cast<float>(static_cast<std::uint32_t>(read_uint(in, 4, path)));
    }
    arrays.push_back(t);
  }
  if (arrays.size() != 14) throw DataError("extractor weights must hold 7 conv layers: " + path);
  const std::array<std::int64_t, 3> widths{arrays[0].size(0), arrays[4].size(0), arrays[8].size(0)};

  std::shared_ptr<FeatureExtractorImpl> phi(new FeatureExtractorImpl());
  phi->build(widths);
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < phi->convs_.size(); ++i) {
    auto& conv = phi->convs_[i];
    if (!conv->weight.sizes().equals(arrays[2 * i].sizes()) ||
        !conv->bias.sizes().equals(arrays[2 * i + 1].sizes())) {
      throw DataError("extractor weights layer " + std::to_string(i) + " has shape " +
                      c10::str(arrays[2 * i].sizes()) + ", expected " +
                      c10::str(conv->weight.sizes()));
    }
    conv->weight.copy_(arrays[2 * i]);
    conv->bias.copy_(arrays[2 * i + 1]);
  }
  phi->freeze();
  return phi;
}

torch::Tensor gram_matrix(const torch::Tensor& features) {
  const auto b = features.size(0), c = features.size(1);
  const auto hw = features.size(2) * features.size(3);
  const auto f = features.reshape({b, c, hw});
  return torch::bmm(f, f.transpose(1, 2)) / static_cast<double>(c * hw);
}

PerceptualStyle perceptual_style_losses(const torch::Tensor& output, const torch::Tensor& composite,
                                        const torch::Tensor& target, FeatureExtractor& phi) {
  check_same_shape(output, target, "perceptual/style loss");
  check_same_shape(composite, target, "perceptual/style loss");
  std::array<torch::Tensor, 3> gt;
  {
    torch::NoGradGuard no_grad;
    gt = phi->forward(target);
  }
  const auto out = phi->forward(output);
  const auto comp = phi->forward(composite);
  PerceptualStyle losses{torch::zeros({}, target.options()), torch::zeros({}, target.options())};
  for (int i = 0; i < 3; ++i) {
    losses.perceptual = losses.perceptual + (out[i] - gt[i]).abs().mean() + (comp[i] - gt[i]).abs().mean();
    const auto g_gt = gram_matrix(gt[i]);
    losses.style = losses.style + (gram_matrix(out[i]) - g_gt).abs().mean() +
                   (gram_matrix(comp[i]) - g_gt).abs().mean();
  }
  return losses;
}

torch::Tensor perceptual_loss(const torch::Tensor& output, const torch::Tensor& composite,
                              const torch::Tensor& target, FeatureExtractor& phi) {
  return perceptual_style_losses(output, composite, target, phi).perceptual;
}

torch::Tensor style_loss(const torch::Tensor& output, const torch::Tensor& composite,
                         const torch::Tensor& target, FeatureExtractor& phi) {
  return perceptual_style_losses(output, composite, target, phi).style;
}

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps) {
  check_same_shape(pred, target, "dice_loss");
  if (pred.numel() == 0) throw ShapeError("dice_loss: empty input");
  {
    torch::NoGradGuard no_grad;
    if (pred.min().item<double>() < 0.0 || pred.max().item<double>() > 1.0) {
      throw ValueError("dice_loss: predictions must lie in [0, 1]");
    }
  }
  const auto p = pred.reshape({pred.size(0), -1});
  const auto g = target.reshape({target.size(0), -1}).to(pred.dtype());
  const auto overlap = (p * g).sum(1);
  const auto denom = (p * p).sum(1) + (g * g).sum(1);
  return (1.0 - (2.0 * overlap + eps) / (denom + eps)).mean();
}

AdversarialLosses adversarial_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  AdversarialLosses out;
  out.discriminator = (torch::relu(1.0 - d_real) + torch::relu(1.0 + d_fake)).mean();
  out.generator = (-d_fake).mean();
  return out;
}

torch::Tensor total_loss(const LossParts& parts, const LossWeights& w) {
  const std::pair<const char*, const torch::Tensor*> named[] = {
      {"msr", &parts.msr}, {"per", &parts.per}, {"sty", &parts.sty},
      {"seg", &parts.seg}, {"adv", &parts.adv}};
  for (const auto& [name, t] : named) {
    if (!t->defined()) throw ValueError(std::string("total_loss: missing term ") + name);
    if (!torch::isfinite(*t).all().item<bool>()) throw NonFiniteLossError(name);
  }
  return w.alpha_msr * parts.msr + w.alpha_per * parts.per + w.alpha_sty * parts.sty +
         w.alpha_seg * parts.seg + w.alpha_adv * parts.adv;
}

}  // namespace viteraser
