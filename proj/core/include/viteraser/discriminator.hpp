#pragma once

#include <torch/torch.h>

#include <vector>

#include "viteraser/layers.hpp"

namespace viteraser {

// Mask-conditioned patch discriminator. The image and the text-box mask are
// stacked into 4 channels and run through six stride-2 5x5 spectrally
// normalized convolutions (64, 128, 256, 256, 256, 1) with LeakyReLU(0.2)
// between them. The final score map is squashed to (-1, 1) with 2 sigmoid - 1
// and averaged, giving one score per sample.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl();

  // image: (B, 3, H, W); mask: (B, 1, H, W). Returns (B,).
  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& mask);

  const std::vector<SNConv2d>& layers() const { return layers_; }

 private:
  std::vector<SNConv2d> layers_;
};
TORCH_MODULE(Discriminator);

}  // namespace viteraser
