#include "viteraser/decoder.hpp"

#include "viteraser/errors.hpp"

namespace viteraser {

PatchSplitImpl::PatchSplitImpl(std::int64_t in, std::int64_t out) : in_channels(in) {
  if (in % 4 != 0) {
    throw ConfigError("patch_split: input channels " + std::to_string(in) +
                      " are not divisible by 4");
  }
  proj = register_module("proj", conv1x1(in / 4, out));
  init_conv_weights(*this);
}

torch::Tensor PatchSplitImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != in_channels) {
    throw ShapeError("patch_split: expected (B, " + std::to_string(in_channels) +
                     ", h, w), got " + c10::str(x.sizes()));
  }
  return proj(torch::pixel_shuffle(x, 2));
}

LateralConnectionImpl::LateralConnectionImpl(std::int64_t c) : channels(c) {
  transform = register_module("transform", conv1x1(c, c));
  expand1 = register_module("expand1", conv3x3(c, 2 * c));
  expand2 = register_module("expand2", conv3x3(2 * c, 2 * c));
  shrink = register_module("shrink", conv3x3(2 * c, c));
  init_conv_weights(*this);
}

torch::Tensor LateralConnectionImpl::forward(const torch::Tensor& f_enc, const torch::Tensor& f_dec) {
  if (!f_enc.sizes().equals(f_dec.sizes()) || f_enc.dim() != 4 || f_enc.size(1) != channels) {
    throw ShapeError("lateral connection: encoder " + c10::str(f_enc.sizes()) + " vs decoder " +
                     c10::str(f_dec.sizes()));
  }
  auto x = torch::relu(transform(f_enc));
  x = torch::relu(expand1(x));
  x = torch::relu(expand2(x));
  return f_dec + shrink(x);
}

DecoderImpl::DecoderImpl(const ModelConfig& config) : config_(config) {
  for (int k = 0; k < 5; ++k) {
    BlockOptions bo;
    bo.type = config.block_type;
    bo.dim = config.dec_block_channels(k);
    bo.heads = config.dec_heads(k);
    bo.window_size = config.window_size;
    bo.ffn_expansion = config.ffn_expansion;
    bo.sr_ratio = config.dec_sr_ratio(k);
    const auto resolution = config.input_size >> (5 - k);
    stages[k] = register_module("stage" + std::to_string(k + 1),
                                BlockStack(bo, config.dec_depth(k), resolution));
    splits[k] = register_module("split" + std::to_string(k + 1),
                                PatchSplit(bo.dim, config.dec_channels(k)));
  }
  for (int k = 0; k < 3; ++k) {
    // Decoder stage k + 1 consumes the stage-k output, which has the same
    // stride and width as encoder stage 2 - k.
    const auto c = config.dec_channels(k);
    if (c != config.enc_channels[2 - k]) throw ConfigError("lateral connection width mismatch");
    laterals[k] = register_module("lateral" + std::to_string(k + 1), LateralConnection(c));
  }
  image_head = register_module("image_head", conv3x3(config.dec_channels(4), 3));
  quarter_head = register_module("quarter_head", conv3x3(config.dec_channels(2), 3));
  half_head = register_module("half_head", conv3x3(config.dec_channels(3), 3));
  mask_deconv = register_module("mask_deconv", SNConvTranspose2d(config.dec_channels(3), 64, 3, 2, 1, 1));
  mask_head = register_module("mask_head", conv3x3(64, 1));
  init_conv_weights(*image_head);
  init_conv_weights(*quarter_head);
  init_conv_weights(*half_head);
  init_conv_weights(*mask_head);
}

DecoderOutput DecoderImpl::forward(const EncoderOutput& enc, bool auxiliary) {
  for (int i = 0; i < 4; ++i) {
    const auto& f = enc.features[i];
    const auto expected = config_.input_size >> (i + 2);
    if (!f.defined() || f.dim() != 4 || f.size(1) != config_.enc_channels[i] ||
        f.size(2) != expected || f.size(3) != expected) {
      throw ShapeError("decode: encoder feature " + std::to_string(i + 1) +
                       " does not match the model config");
    }
  }
  DecoderOutput out;
  auto x = enc.features[3];
  for (int k = 0; k < 5; ++k) {
    if (k >= 1 && k <= 3) x = laterals[k - 1]->forward(enc.features[3 - k], x);
    auto tokens = stages[k]->forward(to_channels_last(x));
    x = splits[k]->forward(to_channels_first(tokens));
    out.features[k] = x;
  }
  out.image = image_head(out.features[4]);
  if (auxiliary) {
    ++aux_head_calls_;
    AuxiliaryOutputs aux;
    aux.image_quarter = quarter_head(out.features[2]);
    aux.image_half = half_head(out.features[3]);
    aux.mask = torch::sigmoid(mask_head(torch::relu(mask_deconv(out.features[3]))));
    out.aux = std::move(aux);
  }
  return out;
}

}  // namespace viteraser
