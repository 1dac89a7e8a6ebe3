#include "viteraser/encoder.hpp"

#include "viteraser/errors.hpp"
#include "viteraser/layers.hpp"

namespace viteraser {

PatchEmbedImpl::PatchEmbedImpl(PatchEmbedOptions o) : options(o) {
  if (o.ratio() <= 0) throw ConfigError("patch embedding ratio must be positive");
  proj = register_module("proj", conv1x1(o.in_channels() * o.ratio() * o.ratio(), o.out_channels()));
  if (o.norm()) {
    norm = register_module("norm",
                           torch::nn::LayerNorm(torch::nn::LayerNormOptions({o.out_channels()})));
  }
  init_conv_weights(*this);
}

torch::Tensor PatchEmbedImpl::embed(const torch::Tensor& x) {
  const auto r = options.ratio();
  if (x.dim() != 4 || x.size(1) != options.in_channels()) {
    throw ShapeError("patch_embed: expected (B, " + std::to_string(options.in_channels()) +
                     ", H, W), got " + c10::str(x.sizes()));
  }
  if (x.size(2) % r != 0 || x.size(3) % r != 0) {
    throw ShapeError("patch_embed: spatial size " + std::to_string(x.size(2)) + "x" +
                     std::to_string(x.size(3)) + " is not divisible by " + std::to_string(r));
  }
  auto tokens = to_channels_last(proj(torch::pixel_unshuffle(x, r)));
  if (options.norm()) tokens = norm(tokens);
  return tokens;
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& x) {
  return to_channels_first(embed(x)).contiguous();
}

torch::Tensor normalize_input(const torch::Tensor& image) { return (image - 0.5) / 0.5; }

EncoderImpl::EncoderImpl(const ModelConfig& config) : config_(config) {
  std::int64_t in = 3;
  for (int i = 0; i < 4; ++i) {
    const auto ratio = i == 0 ? 4 : 2;
    const auto resolution = config.input_size >> (i + 2);
    embeds_[i] = register_module("embed" + std::to_string(i + 1),
                                 PatchEmbed(PatchEmbedOptions(in, config.enc_channels[i], ratio)));
    BlockOptions bo;
    bo.type = config.block_type;
    bo.dim = config.enc_channels[i];
    bo.heads = config.enc_heads[i];
    bo.window_size = config.window_size;
    bo.ffn_expansion = config.ffn_expansion;
    bo.sr_ratio = config.enc_sr_ratio(i);
    stages_[i] = register_module("stage" + std::to_string(i + 1),
                                 BlockStack(bo, config.enc_depths[i], resolution));
    in = config.enc_channels[i];
  }
  mask_token_ = register_parameter("mask_token", torch::zeros({config.enc_channels[0]}));
  trunc_normal_(mask_token_, 0.02);
}

EncoderOutput EncoderImpl::forward(const torch::Tensor& image,
                                   const std::optional<torch::Tensor>& token_mask) {
  if (image.dim() != 4 || image.size(1) != 3) {
    throw ShapeError("encode: expected a (B, 3, H, W) image, got " + c10::str(image.sizes()));
  }
  if (image.size(2) != config_.input_size || image.size(3) != config_.input_size) {
    throw ShapeError("encode: image is " + std::to_string(image.size(2)) + "x" +
                     std::to_string(image.size(3)) + ", model input_size is " +
                     std::to_string(config_.input_size));
  }
  EncoderOutput out;
  auto x = normalize_input(image);
  for (int i = 0; i < 4; ++i) {
    auto tokens = embeds_[i]->embed(x);
    if (i == 0 && token_mask) {
      const auto& m = *token_mask;
      if (m.dim() != 4 || m.size(0) != image.size(0) || m.size(1) != 1 ||
          m.size(2) != image.size(2) || m.size(3) != image.size(3)) {
        throw ShapeError("encode: token mask must be (B, 1, H, W)");
      }
      // Sample the pixel mask at each token's top-left pixel.
      const auto grid = to_channels_last(
          m.slice(2, 0, std::nullopt, 4).slice(3, 0, std::nullopt, 4).to(tokens.dtype()));
      tokens = tokens * (1.0 - grid) + mask_token_ * grid;
    }
    tokens = stages_[i]->forward(tokens);
    out.features[i] = to_channels_first(tokens).contiguous();
    x = out.features[i];
  }
  return out;
}

}  // namespace viteraser
