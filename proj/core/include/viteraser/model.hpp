#pragma once

#include <torch/torch.h>

#include "viteraser/config.hpp"
#include "viteraser/decoder.hpp"
#include "viteraser/encoder.hpp"
#include "viteraser/segmim.hpp"

namespace viteraser {

struct PretrainOutput {
  torch::Tensor segmentation;    // (B, 1, H, W) in (0, 1), from the encoder
  torch::Tensor reconstruction;  // (B, 3, H, W), from the decoder
};

// The text-removal generator: encoder, decoder and the two pretraining heads.
class ViTEraserImpl : public torch::nn::Module {
 public:
  explicit ViTEraserImpl(const ModelConfig& config);

  // Text removal. Auxiliary outputs are produced only when requested.
  DecoderOutput forward(const torch::Tensor& image, bool auxiliary = false);
  // Masked pretraining pass: the image should already be masked (see
  // apply_mask); `mim_mask` drives the mask-token substitution.
  PretrainOutput pretrain_forward(const torch::Tensor& masked_image, const torch::Tensor& mim_mask);
  // Encoder-only text-box segmentation (encoder finetuning).
  torch::Tensor segment(const torch::Tensor& image);

  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> decoder_parameters() const;

  const ModelConfig& config() const { return config_; }

  Encoder encoder{nullptr};
  Decoder decoder{nullptr};
  SegHead seg_head{nullptr};
  ReconHead recon_head{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(ViTEraser);

}  // namespace viteraser
