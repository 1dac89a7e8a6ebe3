#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>

#include "viteraser/blocks.hpp"
#include "viteraser/config.hpp"

namespace viteraser {

// Downsamples by `ratio`: every ratio x ratio x c_in patch is flattened
// (channel-major, then row, then column) and projected by a 1x1 convolution
// to c_out channels, followed by layer normalization over channels.
struct PatchEmbedOptions {
  PatchEmbedOptions(std::int64_t in_channels, std::int64_t out_channels, std::int64_t ratio)
      : in_channels_(in_channels), out_channels_(out_channels), ratio_(ratio) {}
  TORCH_ARG(std::int64_t, in_channels);
  TORCH_ARG(std::int64_t, out_channels);
  TORCH_ARG(std::int64_t, ratio);
  TORCH_ARG(bool, norm) = true;
};

struct PatchEmbedImpl : torch::nn::Module {
  explicit PatchEmbedImpl(PatchEmbedOptions options);
  // NCHW -> (B, H/ratio, W/ratio, C_out) tokens.
  torch::Tensor embed(const torch::Tensor& x);
  // NCHW -> NCHW.
  torch::Tensor forward(const torch::Tensor& x);

  PatchEmbedOptions options;
  Conv proj{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(PatchEmbed);

// Encoder feature maps, NCHW, at strides 4, 8, 16, 32.
struct EncoderOutput {
  std::array<torch::Tensor, 4> features;
};

// Maps [0, 1] images to the zero-centred range the encoder consumes.
torch::Tensor normalize_input(const torch::Tensor& image);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ModelConfig& config);

  // image: (B, 3, H, W) in [0, 1] with H = W = config.input_size.
  // token_mask: optional (B, 1, H, W) binary mask; masked stage-1 tokens are
  // replaced by the learnable mask token after embedding.
  EncoderOutput forward(const torch::Tensor& image,
                        const std::optional<torch::Tensor>& token_mask = std::nullopt);

  const ModelConfig& config() const { return config_; }
  PatchEmbed embed(int stage) const { return embeds_[stage]; }
  BlockStack stage(int stage) const { return stages_[stage]; }
  const torch::Tensor& mask_token() const { return mask_token_; }

 private:
  ModelConfig config_;
  std::array<PatchEmbed, 4> embeds_{nullptr, nullptr, nullptr, nullptr};
  std::array<BlockStack, 4> stages_{nullptr, nullptr, nullptr, nullptr};
  torch::Tensor mask_token_;
};
TORCH_MODULE(Encoder);

}  // namespace viteraser
