#include "viteraser/blocks.hpp"

#include <cmath>

#include "viteraser/errors.hpp"
#include "viteraser/layers.hpp"

namespace viteraser {

namespace F = torch::nn::functional;

torch::Tensor window_partition(const torch::Tensor& x, std::int64_t window) {
  if (window <= 0) throw ShapeError("window_partition: window must be positive");
  if (x.dim() != 4) throw ShapeError("window_partition: expected a (B, H, W, C) tensor");
  const auto b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  if (h % window != 0 || w % window != 0) {
    throw ShapeError("window_partition: " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by window " + std::to_string(window));
  }
  return x.reshape({b, h / window, window, w / window, window, c})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({-1, window * window, c});
}

torch::Tensor window_merge(const torch::Tensor& windows, std::int64_t h, std::int64_t w) {
  if (windows.dim() != 3) throw ShapeError("window_merge: expected (num_windows, N, C)");
  const auto n = windows.size(1);
  const auto window = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (window * window != n || window == 0) {
    throw ShapeError("window_merge: window token count " + std::to_string(n) + " is not a square");
  }
  if (h <= 0 || w <= 0 || h % window != 0 || w % window != 0) {
    throw ShapeError("window_merge: target size is not a multiple of the window");
  }
  const auto per_image = (h / window) * (w / window);
  if (windows.size(0) % per_image != 0) {
    throw ShapeError("window_merge: " + std::to_string(windows.size(0)) +
                     " windows do not tile a " + std::to_string(h) + "x" + std::to_string(w) +
                     " map");
  }
  const auto b = windows.size(0) / per_image;
  const auto c = windows.size(2);
  return windows.reshape({b, h / window, w / window, window, window, c})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({b, h, w, c});
}

MlpImpl::MlpImpl(std::int64_t dim, std::int64_t hidden)
    : fc1(register_module("fc1", Dense(dim, hidden))),
      fc2(register_module("fc2", Dense(hidden, dim))) {}

torch::Tensor MlpImpl::forward(const torch::Tensor& x) { return fc2(torch::gelu(fc1(x))); }

namespace {

// (N, N) index into the (2w-1)^2 relative offset table.
torch::Tensor make_relative_position_index(std::int64_t window) {
  auto coords = torch::stack(torch::meshgrid({torch::arange(window), torch::arange(window)}, "ij"))
                    .flatten(1);  // (2, N)
  auto rel = (coords.unsqueeze(2) - coords.unsqueeze(1)).permute({1, 2, 0}).contiguous();
  rel += window - 1;
  rel.select(2, 0).mul_(2 * window - 1);
  return rel.sum(-1);
}

// (1, 2w-1, 2w-1, 2) log-spaced relative coordinates.
torch::Tensor make_relative_coords_table(std::int64_t window) {
  auto r = torch::arange(-(window - 1), window, torch::kFloat32);
  auto table = torch::stack(torch::meshgrid({r, r}, "ij")).permute({1, 2, 0}).unsqueeze(0);
  if (window > 1) table = table / static_cast<double>(window - 1);
  table = table * 8.0;
  return torch::sign(table) * torch::log2(torch::abs(table) + 1.0) / std::log2(8.0);
}

}  // namespace

WindowAttentionImpl::WindowAttentionImpl(std::int64_t dim_, std::int64_t heads_,
                                         std::int64_t window_, bool cosine_)
    : dim(dim_), heads(heads_), window(window_), cosine(cosine_) {
  if (dim % heads != 0) throw ConfigError("attention dim must be divisible by heads");
  qkv = register_module("qkv", Dense(dim, 3 * dim, /*with_bias=*/!cosine));
  proj = register_module("proj", Dense(dim, dim));
  relative_position_index =
      register_buffer("relative_position_index", make_relative_position_index(window));
  const auto table_size = (2 * window - 1) * (2 * window - 1);
  if (cosine) {
    q_bias = register_parameter("q_bias", torch::zeros({dim}));
    v_bias = register_parameter("v_bias", torch::zeros({dim}));
    logit_scale = register_parameter("logit_scale", torch::full({heads, 1, 1}, std::log(10.0)));
    cpb_mlp = register_module(
        "cpb_mlp", torch::nn::Sequential(Dense(2, 512), torch::nn::ReLU(),
                                         Dense(512, heads, /*with_bias=*/false)));
    relative_coords_table =
        register_buffer("relative_coords_table", make_relative_coords_table(window));
  } else {
    bias_table = register_parameter("relative_position_bias_table", torch::zeros({table_size, heads}));
  }
  init_transformer_weights(*this);
  if (!cosine) trunc_normal_(bias_table, 0.02);
}

torch::Tensor WindowAttentionImpl::relative_position_bias() {
  const auto n = window * window;
  torch::Tensor table;
  if (cosine) {
    table = cpb_mlp->forward(relative_coords_table).view({-1, heads});
  } else {
    table = bias_table;
  }
  // Module::to(dtype) also casts integer buffers, so restore the index type.
  auto bias = table.index_select(0, relative_position_index.view({-1}).to(torch::kLong))
                  .view({n, n, heads})
                  .permute({2, 0, 1});
  if (cosine) bias = 16.0 * torch::sigmoid(bias);
  return bias;
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto bn = x.size(0), n = x.size(1), c = x.size(2);
  const auto head_dim = c / heads;
  torch::Tensor qkv_out;
  if (cosine) {
    const auto bias = torch::cat({q_bias, torch::zeros_like(v_bias), v_bias});
    qkv_out = torch::linear(x, qkv->weight, bias);
  } else {
    qkv_out = qkv(x);
  }
  qkv_out = qkv_out.reshape({bn, n, 3, heads, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv_out[0], k = qkv_out[1], v = qkv_out[2];

  // Fold the logit scale into q so both variants are softmax(q k^T + bias) v.
  if (cosine) {
    const auto opts = F::NormalizeFuncOptions().dim(-1);
    q = F::normalize(q, opts) * torch::clamp_max(logit_scale, std::log(100.0)).exp();
    k = F::normalize(k, opts);
  } else {
    q = q * (1.0 / std::sqrt(static_cast<double>(head_dim)));
  }
  auto bias = relative_position_bias().unsqueeze(0);  // (1, heads, n, n)
  if (mask.defined()) {
    const auto nw = mask.size(0);
    bias = (bias.unsqueeze(0) + mask.unsqueeze(1).unsqueeze(0))
               .expand({bn / nw, nw, heads, n, n})
               .reshape({bn, heads, n, n});
  }
  torch::Tensor out;
  if (probe.record) {
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) + bias, -1);
    probe.last = attn.detach();
    out = torch::matmul(attn, v);
  } else {
    out = at::scaled_dot_product_attention(q, k, v, bias, 0.0, false, /*scale=*/1.0);
  }
  return proj(out.transpose(1, 2).reshape({bn, n, c}));
}

SpatialReductionAttentionImpl::SpatialReductionAttentionImpl(std::int64_t dim_, std::int64_t heads_,
                                                             std::int64_t sr_ratio_)
    : dim(dim_), heads(heads_), sr_ratio(sr_ratio_) {
  if (dim % heads != 0) throw ConfigError("attention dim must be divisible by heads");
  q = register_module("q", Dense(dim, dim));
  kv = register_module("kv", Dense(dim, 2 * dim));
  proj = register_module("proj", Dense(dim, dim));
  if (sr_ratio > 1) {
    sr = register_module("sr", Conv(dim, dim, sr_ratio, sr_ratio));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  }
  init_transformer_weights(*this);
  if (sr_ratio > 1) init_conv_weights(*this);
}

torch::Tensor SpatialReductionAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  const auto n = h * w;
  const auto head_dim = c / heads;
  const auto tokens = x.reshape({b, n, c});
  auto qh = q(tokens).reshape({b, n, heads, head_dim}).permute({0, 2, 1, 3});

  torch::Tensor source = tokens;
  if (sr_ratio > 1) {
    auto grid = to_channels_first(x);
    const auto pad_b = (sr_ratio - h % sr_ratio) % sr_ratio;
    const auto pad_r = (sr_ratio - w % sr_ratio) % sr_ratio;
    if (pad_b > 0 || pad_r > 0) grid = torch::constant_pad_nd(grid, {0, pad_r, 0, pad_b});
    source = norm(sr(grid).flatten(2).transpose(1, 2));
  }
  const auto m = source.size(1);
  auto kvh = kv(source).reshape({b, m, 2, heads, head_dim}).permute({2, 0, 3, 1, 4});
  torch::Tensor out;
  if (probe.record) {
    auto attn = torch::matmul(qh * (1.0 / std::sqrt(static_cast<double>(head_dim))),
                              kvh[0].transpose(-2, -1));
    attn = torch::softmax(attn, -1);
    probe.last = attn.detach();
    out = torch::matmul(attn, kvh[1]);
  } else {
    out = at::scaled_dot_product_attention(qh, kvh[0], kvh[1]);
  }
  out = out.transpose(1, 2).reshape({b, n, c});
  return proj(out).reshape({b, h, w, c});
}

torch::Tensor VitBlockImpl::forward(const torch::Tensor& x) {
  return to_channels_first(forward_tokens(to_channels_last(x))).contiguous();
}

namespace {

std::int64_t hidden_dim(const BlockOptions& o) {
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(o.dim) * o.ffn_expansion));
}

torch::nn::LayerNorm layer_norm(std::int64_t dim) {
  return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}));
}

void check_dim(const torch::Tensor& x, const BlockOptions& o) {
  if (x.dim() != 4 || x.size(3) != o.dim) {
    throw ShapeError("block expects (B, H, W, " + std::to_string(o.dim) + ") tokens, got " +
                     c10::str(x.sizes()));
  }
}

}  // namespace

SwinBlockImpl::SwinBlockImpl(BlockOptions o) : VitBlockImpl(o) {
  if (o.window_size <= 0) throw ConfigError("window_size must be positive");
  if (o.shift < 0 || o.shift >= o.window_size) throw ConfigError("shift must be in [0, window)");
  norm1 = register_module("norm1", layer_norm(o.dim));
  attn = register_module("attn", WindowAttention(o.dim, o.heads, o.window_size,
                                                 o.type == BlockType::kSwinV2));
  norm2 = register_module("norm2", layer_norm(o.dim));
  mlp = register_module("mlp", Mlp(o.dim, hidden_dim(o)));
  init_transformer_weights(*mlp);
}

torch::Tensor SwinBlockImpl::attention_mask(std::int64_t h, std::int64_t w, std::int64_t hp,
                                            std::int64_t wp, const torch::TensorOptions& opts) const {
  const auto ws = options.window_size;
  const auto shift = options.shift;
  if (shift == 0 && hp == h && wp == w) return {};

  auto region = torch::zeros({hp, wp}, torch::kLong);
  if (shift > 0) {
    const std::int64_t hb[4] = {0, hp - ws, hp - shift, hp};
    const std::int64_t wb[4] = {0, wp - ws, wp - shift, wp};
    std::int64_t id = 0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        region.slice(0, hb[i], hb[i + 1]).slice(1, wb[j], wb[j + 1]).fill_(id++);
      }
    }
  }
  auto valid = torch::zeros({hp, wp}, torch::kLong);
  valid.slice(0, 0, h).slice(1, 0, w).fill_(1);
  if (shift > 0) valid = torch::roll(valid, {-shift, -shift}, {0, 1});

  const auto region_w = window_partition(region.view({1, hp, wp, 1}), ws).squeeze(-1);
  const auto valid_w = window_partition(valid.view({1, hp, wp, 1}), ws).squeeze(-1);
  const auto blocked = region_w.unsqueeze(1).ne(region_w.unsqueeze(2)) |
                       valid_w.unsqueeze(1).eq(0);
  return blocked.to(opts.dtype()).to(opts.device()) * -100.0;
}

torch::Tensor SwinBlockImpl::forward_tokens(const torch::Tensor& input) {
  check_dim(input, options);
  const bool v2 = options.type == BlockType::kSwinV2;
  const auto ws = options.window_size;
  const auto shift = options.shift;
  const auto h = input.size(1), w = input.size(2);
  const auto pad_b = (ws - h % ws) % ws;
  const auto pad_r = (ws - w % ws) % ws;
  const auto hp = h + pad_b, wp = w + pad_r;

  auto x = v2 ? input : norm1(input);
  if (pad_b > 0 || pad_r > 0) x = torch::constant_pad_nd(x, {0, 0, 0, pad_r, 0, pad_b});
  if (shift > 0) x = torch::roll(x, {-shift, -shift}, {1, 2});
  const auto mask = attention_mask(h, w, hp, wp, x.options());
  x = window_merge(attn(window_partition(x, ws), mask), hp, wp);
  if (shift > 0) x = torch::roll(x, {shift, shift}, {1, 2});
  if (pad_b > 0 || pad_r > 0) x = x.slice(1, 0, h).slice(2, 0, w);

  if (v2) {
    x = input + norm1(x);
    return x + norm2(mlp(x));
  }
  x = input + x;
  return x + mlp(norm2(x));
}

PvtBlockImpl::PvtBlockImpl(BlockOptions o) : VitBlockImpl(o) {
  if (o.sr_ratio <= 0) throw ConfigError("sr_ratio must be positive");
  norm1 = register_module("norm1", layer_norm(o.dim));
  attn = register_module("attn", SpatialReductionAttention(o.dim, o.heads, o.sr_ratio));
  norm2 = register_module("norm2", layer_norm(o.dim));
  mlp = register_module("mlp", Mlp(o.dim, hidden_dim(o)));
  init_transformer_weights(*mlp);
}

torch::Tensor PvtBlockImpl::forward_tokens(const torch::Tensor& input) {
  check_dim(input, options);
  auto x = input + attn(norm1(input));
  return x + mlp(norm2(x));
}

std::shared_ptr<VitBlockImpl> make_block(const BlockOptions& options) {
  if (options.type == BlockType::kPvt) return std::make_shared<PvtBlockImpl>(options);
  return std::make_shared<SwinBlockImpl>(options);
}

BlockStackImpl::BlockStackImpl(BlockOptions options, std::int64_t depth, std::int64_t resolution) {
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  const bool windowed = options.type != BlockType::kPvt;
  for (std::int64_t j = 0; j < depth; ++j) {
    auto o = options;
    o.shift = (windowed && j % 2 == 1 && resolution > o.window_size) ? o.window_size / 2 : 0;
    blocks_->push_back(make_block(o));
  }
}

torch::Tensor BlockStackImpl::forward(torch::Tensor x) {
  for (const auto& block : *blocks_) x = block->as<VitBlockImpl>()->forward_tokens(x);
  return x;
}

std::vector<std::shared_ptr<VitBlockImpl>> BlockStackImpl::blocks() const {
  std::vector<std::shared_ptr<VitBlockImpl>> out;
  for (const auto& block : *blocks_) out.push_back(std::dynamic_pointer_cast<VitBlockImpl>(block));
  return out;
}

}  // namespace viteraser
