#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>

namespace viteraser {

struct LossWeights {
  double alpha_msr = 1.0;
  double alpha_per = 0.01;
  double alpha_sty = 120.0;
  double alpha_seg = 1.0;
  double alpha_adv = 0.1;
  // Text / non-text weights of the reconstruction loss, ordered
  // (quarter, half, full) resolution.
  std::array<double, 3> lambda{5.0, 6.0, 10.0};
  std::array<double, 3> beta{0.8, 1.0, 2.0};

  bool operator==(const LossWeights&) const = default;
};

// Predictions at up to three scales; undefined half/quarter tensors are
// skipped by msr_loss.
struct MultiScaleImages {
  torch::Tensor full;
  torch::Tensor half;
  torch::Tensor quarter;
};

torch::Tensor resize_area(const torch::Tensor& x, std::int64_t h, std::int64_t w);
// Area interpolation followed by re-binarization at 0.5.
torch::Tensor resize_mask(const torch::Tensor& mask, std::int64_t h, std::int64_t w);

// Text-aware multi-scale L1. Each L1 term is a mean over all elements of the
// masked absolute residual.
torch::Tensor msr_loss(const MultiScaleImages& outputs, const torch::Tensor& target,
                       const torch::Tensor& mask, const LossWeights& weights);

// Prediction inside text boxes, input elsewhere.
torch::Tensor composite_image(const torch::Tensor& output, const torch::Tensor& input,
                              const torch::Tensor& mask);

// Frozen VGG-16-style feature function truncated after the third pooling
// layer: conv widths (w1, w1 | w2, w2 | w3, w3, w3), 3x3 kernels, ReLU, 2x2
// max pooling. The taps are the outputs of the three pooling layers.
// Inputs are [0, 1] images, standardized with the ImageNet statistics.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  // Random He-normal weights drawn from a generator seeded with `seed`.
  FeatureExtractorImpl(std::array<std::int64_t, 3> widths, std::uint64_t seed);
  // Weights from a file written by save_weights (or converted from a
  // classification-pretrained VGG-16).
  static std::shared_ptr<FeatureExtractorImpl> from_file(const std::string& path);

  std::array<torch::Tensor, 3> forward(const torch::Tensor& image);
  void save_weights(const std::string& path) const;

  const std::array<std::int64_t, 3>& widths() const { return widths_; }
  static constexpr std::int64_t kMinInputSize = 8;

 private:
  FeatureExtractorImpl() = default;
  void build(std::array<std::int64_t, 3> widths);
  void freeze();

  std::array<std::int64_t, 3> widths_{};
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(FeatureExtractor);

// Gram matrix of a (B, C, H, W) map, normalized by C * H * W: (B, C, C).
torch::Tensor gram_matrix(const torch::Tensor& features);

struct PerceptualStyle {
  torch::Tensor perceptual;
  torch::Tensor style;
};

// Both feature-space losses from one pass of the extractor per image.
PerceptualStyle perceptual_style_losses(const torch::Tensor& output, const torch::Tensor& composite,
                                        const torch::Tensor& target, FeatureExtractor& phi);
torch::Tensor perceptual_loss(const torch::Tensor& output, const torch::Tensor& composite,
                              const torch::Tensor& target, FeatureExtractor& phi);
torch::Tensor style_loss(const torch::Tensor& output, const torch::Tensor& composite,
                         const torch::Tensor& target, FeatureExtractor& phi);

// 1 - (2 sum(p g) + eps) / (sum(p^2) + sum(g^2) + eps) per sample, averaged
// over the batch. Empty-vs-empty masks score 0.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double eps = 1e-6);

struct AdversarialLosses {
  torch::Tensor discriminator;  // hinge loss for D
  torch::Tensor generator;      // -D(fake)
};

// d_real, d_fake: discriminator scores in (-1, 1); batch-averaged.
AdversarialLosses adversarial_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake);

struct LossParts {
  torch::Tensor msr;
  torch::Tensor per;
  torch::Tensor sty;
  torch::Tensor seg;
  torch::Tensor adv;
};

// Weighted sum; throws NonFiniteLossError naming the first bad term.
torch::Tensor total_loss(const LossParts& parts, const LossWeights& weights);

}  // namespace viteraser
