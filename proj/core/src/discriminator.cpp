#include "viteraser/discriminator.hpp"

#include "viteraser/errors.hpp"

namespace viteraser {

DiscriminatorImpl::DiscriminatorImpl() {
  const std::int64_t widths[] = {64, 128, 256, 256, 256, 1};
  std::int64_t in = 4;
  for (int i = 0; i < 6; ++i) {
    layers_.push_back(register_module("conv" + std::to_string(i + 1), SNConv2d(in, widths[i], 5, 2, 2)));
    in = widths[i];
  }
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image, const torch::Tensor& mask) {
  if (image.dim() != 4 || image.size(1) != 3 || mask.dim() != 4 || mask.size(1) != 1 ||
      image.size(0) != mask.size(0) || image.size(2) != mask.size(2) ||
      image.size(3) != mask.size(3)) {
    throw ShapeError("discriminate: image " + c10::str(image.sizes()) + " and mask " +
                     c10::str(mask.sizes()) + " are not spatially aligned");
  }
  auto x = torch::cat({image, mask.to(image.dtype())}, 1);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x);
    if (i + 1 < layers_.size()) x = torch::leaky_relu(x, 0.2);
  }
  return (2.0 * torch::sigmoid(x) - 1.0).mean({1, 2, 3});
}

}  // namespace viteraser
