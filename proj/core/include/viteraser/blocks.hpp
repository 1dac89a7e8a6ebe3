#pragma once

#include <torch/torch.h>

#include <memory>

#include "viteraser/config.hpp"
#include "viteraser/layers.hpp"

namespace viteraser {

// Splits a (B, H, W, C) map into non-overlapping windows, returned as
// (B * H/window * W/window, window*window, C) with windows in row-major order
// and tokens row-major inside each window. H and W must be multiples of
// `window`.
torch::Tensor window_partition(const torch::Tensor& x, std::int64_t window);
// Inverse of window_partition.
torch::Tensor window_merge(const torch::Tensor& windows, std::int64_t h, std::int64_t w);

struct BlockOptions {
  BlockType type = BlockType::kSwinV2;
  std::int64_t dim = 0;
  std::int64_t heads = 1;
  std::int64_t window_size = 7;
  std::int64_t shift = 0;
  double ffn_expansion = 4.0;
  std::int64_t sr_ratio = 1;
};

// Attention sub-layers can keep their last softmax output for inspection.
struct AttentionProbe {
  bool record = false;
  torch::Tensor last;
};

struct MlpImpl : torch::nn::Module {
  MlpImpl(std::int64_t dim, std::int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);

  Dense fc1{nullptr};
  Dense fc2{nullptr};
};
TORCH_MODULE(Mlp);

// Multi-head self-attention inside windows. `cosine` selects the v2 variant:
// scaled cosine similarity with a learnable per-head temperature and a
// continuous relative-position bias produced by a small MLP over
// log-spaced coordinates. Otherwise dot-product attention with a learned
// relative-position bias table.
struct WindowAttentionImpl : torch::nn::Module {
  WindowAttentionImpl(std::int64_t dim, std::int64_t heads, std::int64_t window, bool cosine);
  // x: (num_windows * B, window*window, C); mask: (num_windows, N, N) of
  // additive logits or undefined.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);
  torch::Tensor relative_position_bias();

  std::int64_t dim;
  std::int64_t heads;
  std::int64_t window;
  bool cosine;
  Dense qkv{nullptr};
  Dense proj{nullptr};
  torch::Tensor q_bias, v_bias, logit_scale;  // v2 only
  torch::nn::Sequential cpb_mlp{nullptr};     // v2 only
  torch::Tensor bias_table;                   // v1 only
  torch::Tensor relative_coords_table;        // buffer, v2 only
  torch::Tensor relative_position_index;      // buffer
  AttentionProbe probe;
};
TORCH_MODULE(WindowAttention);

// Spatial-reduction attention: keys and values come from the map
// downsampled by a strided sr x sr convolution.
struct SpatialReductionAttentionImpl : torch::nn::Module {
  SpatialReductionAttentionImpl(std::int64_t dim, std::int64_t heads, std::int64_t sr_ratio);
  // x: (B, H, W, C)
  torch::Tensor forward(const torch::Tensor& x);

  std::int64_t dim;
  std::int64_t heads;
  std::int64_t sr_ratio;
  Dense q{nullptr};
  Dense kv{nullptr};
  Dense proj{nullptr};
  Conv sr{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  AttentionProbe probe;
};
TORCH_MODULE(SpatialReductionAttention);

// Common interface: a block maps a (B, H, W, C) token map to the same shape.
struct VitBlockImpl : torch::nn::Module {
  explicit VitBlockImpl(BlockOptions options) : options(options) {}
  virtual torch::Tensor forward_tokens(const torch::Tensor& x) = 0;
  // NCHW convenience wrapper.
  torch::Tensor forward(const torch::Tensor& x);
  virtual AttentionProbe& probe() = 0;

  BlockOptions options;
};

// Swin (pre-norm) and Swin v2 (res-post-norm) blocks with optional cyclic
// shift. Spatial sizes that are not multiples of the window are zero-padded;
// padded keys are masked out of attention and the padding is cropped again.
struct SwinBlockImpl : VitBlockImpl {
  explicit SwinBlockImpl(BlockOptions options);
  torch::Tensor forward_tokens(const torch::Tensor& x) override;
  AttentionProbe& probe() override { return attn->probe; }
  // Additive attention mask for a padded (hp, wp) grid, or undefined when
  // neither shifting nor padding is in effect.
  torch::Tensor attention_mask(std::int64_t h, std::int64_t w, std::int64_t hp, std::int64_t wp,
                               const torch::TensorOptions& opts) const;

  torch::nn::LayerNorm norm1{nullptr};
  WindowAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  Mlp mlp{nullptr};
};

// PVT block: pre-norm spatial-reduction attention + FFN.
struct PvtBlockImpl : VitBlockImpl {
  explicit PvtBlockImpl(BlockOptions options);
  torch::Tensor forward_tokens(const torch::Tensor& x) override;
  AttentionProbe& probe() override { return attn->probe; }

  torch::nn::LayerNorm norm1{nullptr};
  SpatialReductionAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  Mlp mlp{nullptr};
};

std::shared_ptr<VitBlockImpl> make_block(const BlockOptions& options);

// The blocks of one stage. Window blocks alternate unshifted / half-window
// shifted, starting unshifted; shifting is disabled when the stage's nominal
// resolution fits in a single window.
class BlockStackImpl : public torch::nn::Module {
 public:
  BlockStackImpl(BlockOptions options, std::int64_t depth, std::int64_t resolution);
  // (B, H, W, C) -> (B, H, W, C)
  torch::Tensor forward(torch::Tensor x);
  std::vector<std::shared_ptr<VitBlockImpl>> blocks() const;

 private:
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(BlockStack);

}  // namespace viteraser
