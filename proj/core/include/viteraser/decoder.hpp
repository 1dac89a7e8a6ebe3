#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>

#include "viteraser/blocks.hpp"
#include "viteraser/config.hpp"
#include "viteraser/encoder.hpp"
#include "viteraser/layers.hpp"

namespace viteraser {

// Upsamples by 2: every c_in token becomes a 2x2 patch of c_in/4 vectors
// (channel 4k + 2i + j lands at row i, column j of channel k), then a 1x1
// convolution maps to c_out.
struct PatchSplitImpl : torch::nn::Module {
  PatchSplitImpl(std::int64_t in_channels, std::int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t in_channels;
  Conv proj{nullptr};
};
TORCH_MODULE(PatchSplit);

// Encoder-to-decoder skip path: 1x1 conv (c) -> 3x3 (2c) -> 3x3 (2c) ->
// 3x3 (c), ReLU after all but the last, added onto the decoder feature.
struct LateralConnectionImpl : torch::nn::Module {
  explicit LateralConnectionImpl(std::int64_t channels);
  torch::Tensor forward(const torch::Tensor& f_enc, const torch::Tensor& f_dec);

  std::int64_t channels;
  Conv transform{nullptr};
  Conv expand1{nullptr};
  Conv expand2{nullptr};
  Conv shrink{nullptr};
};
TORCH_MODULE(LateralConnection);

struct AuxiliaryOutputs {
  torch::Tensor image_half;     // (B, 3, H/2, W/2)
  torch::Tensor image_quarter;  // (B, 3, H/4, W/4)
  torch::Tensor mask;           // (B, 1, H, W), in (0, 1)
};

struct DecoderOutput {
  // NCHW maps at strides 16, 8, 4, 2, 1.
  std::array<torch::Tensor, 5> features;
  torch::Tensor image;  // (B, 3, H, W), unbounded
  std::optional<AuxiliaryOutputs> aux;
};

class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& config);

  // With `auxiliary` set, also runs the half/quarter image heads and the
  // text-box segmentation head.
  DecoderOutput forward(const EncoderOutput& enc, bool auxiliary);

  const ModelConfig& config() const { return config_; }
  // Number of auxiliary-head evaluations since construction.
  std::int64_t aux_head_calls() const { return aux_head_calls_; }

  std::array<BlockStack, 5> stages{nullptr, nullptr, nullptr, nullptr, nullptr};
  std::array<PatchSplit, 5> splits{nullptr, nullptr, nullptr, nullptr, nullptr};
  // laterals[k] feeds decoder stage k + 1 from encoder stage 2 - k.
  std::array<LateralConnection, 3> laterals{nullptr, nullptr, nullptr};
  Conv image_head{nullptr};
  Conv half_head{nullptr};
  Conv quarter_head{nullptr};
  SNConvTranspose2d mask_deconv{nullptr};
  Conv mask_head{nullptr};

 private:
  ModelConfig config_;
  std::int64_t aux_head_calls_ = 0;
};
TORCH_MODULE(Decoder);

}  // namespace viteraser
