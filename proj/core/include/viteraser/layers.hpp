#pragma once

#include <torch/torch.h>

namespace viteraser {

// Truncated normal on [mean - 2 std, mean + 2 std] by inverse-CDF sampling.
void trunc_normal_(torch::Tensor& tensor, double std = 0.02);

// Transformer weights: truncated normal (std 0.02), zero bias, unit norm.
void init_transformer_weights(torch::nn::Module& module);
// Convolutions: fan-in normal (std = 1/sqrt(fan_in)), zero bias.
void init_conv_weights(torch::nn::Module& module);

// Fully connected layer with an uninitialized weight and zero bias. Unlike
// torch::nn::Linear it draws no default initialization, which for the base
// presets doubled construction time; the owner must run
// init_transformer_weights.
struct DenseImpl : torch::nn::Module {
  DenseImpl(std::int64_t in, std::int64_t out, bool with_bias = true);
  torch::Tensor forward(const torch::Tensor& x) { return torch::nn::functional::linear(x, weight, bias); }

  torch::Tensor weight;
  torch::Tensor bias;
};
TORCH_MODULE(Dense);

// Square-kernel convolution, left uninitialized like Dense; the owner must
// run init_conv_weights.
struct ConvImpl : torch::nn::Module {
  ConvImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride = 1,
           std::int64_t padding = 0, bool with_bias = true);
  torch::Tensor forward(const torch::Tensor& x) { return torch::conv2d(x, weight, bias, stride, padding); }

  torch::Tensor weight;
  torch::Tensor bias;
  std::int64_t stride;
  std::int64_t padding;
};
TORCH_MODULE(Conv);

Conv conv1x1(std::int64_t in, std::int64_t out, bool bias = true);
Conv conv3x3(std::int64_t in, std::int64_t out, bool bias = true);

// NCHW <-> NHWC.
inline torch::Tensor to_channels_last(const torch::Tensor& x) { return x.permute({0, 2, 3, 1}); }
inline torch::Tensor to_channels_first(const torch::Tensor& x) { return x.permute({0, 3, 1, 2}); }

// Power-iteration spectral normalization of a weight tensor. `dim` is the
// output-channel dimension (0 for Conv2d, 1 for ConvTranspose2d). The u/v
// estimates are persistent buffers; one iteration runs per forward while the
// owning module is in training mode.
class SpectralNorm {
 public:
  SpectralNorm() = default;
  SpectralNorm(torch::nn::Module& owner, const torch::Tensor& weight, std::int64_t dim);

  torch::Tensor normalize(const torch::Tensor& weight, bool update);
  // Current estimate of the top singular value of `weight`.
  torch::Tensor sigma(const torch::Tensor& weight) const;

 private:
  torch::Tensor as_matrix(const torch::Tensor& weight) const;

  std::int64_t dim_ = 0;
  torch::Tensor u_;
  torch::Tensor v_;
};

struct SNConv2dImpl : torch::nn::Module {
  SNConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
               std::int64_t padding);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight();

  torch::Tensor weight;
  torch::Tensor bias;
  SpectralNorm sn;
  std::int64_t stride;
  std::int64_t padding;
};
TORCH_MODULE(SNConv2d);

struct SNConvTranspose2dImpl : torch::nn::Module {
  SNConvTranspose2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride,
                        std::int64_t padding, std::int64_t output_padding);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight();

  torch::Tensor weight;
  torch::Tensor bias;
  SpectralNorm sn;
  std::int64_t stride;
  std::int64_t padding;
  std::int64_t output_padding;
};
TORCH_MODULE(SNConvTranspose2d);

}  // namespace viteraser
