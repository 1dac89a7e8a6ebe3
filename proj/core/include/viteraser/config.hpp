#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "viteraser/kv.hpp"

namespace viteraser {

enum class BlockType { kSwin, kSwinV2, kPvt };

std::string_view to_string(BlockType type);
BlockType parse_block_type(std::string_view name);

// Architecture hyperparameters. Encoder stage i (0-based) runs at stride
// 2^(i+2); decoder stages 0..3 mirror the encoder and only the last decoder
// stage is configured separately.
struct ModelConfig {
  BlockType block_type = BlockType::kSwinV2;
  std::array<std::int64_t, 4> enc_depths{};
  std::array<std::int64_t, 4> enc_channels{};
  std::array<std::int64_t, 4> enc_heads{};
  std::int64_t dec_last_depth = 2;
  std::int64_t dec_last_in_channels = 0;
  std::int64_t dec_last_out_channels = 0;
  std::int64_t dec_last_heads = 2;
  std::int64_t window_size = 7;
  std::int64_t sra_reduction = 1;
  double ffn_expansion = 4.0;
  std::int64_t input_size = 512;

  // Decoder stage k in [0, 5): number of blocks.
  std::int64_t dec_depth(int stage) const;
  // Channels of the feature map emitted by decoder stage k in [0, 5).
  std::int64_t dec_channels(int stage) const;
  // Channels the blocks of decoder stage k operate on.
  std::int64_t dec_block_channels(int stage) const;
  std::int64_t dec_heads(int stage) const;
  // Spatial-reduction ratio of encoder stage i / decoder stage k (pvt only).
  std::int64_t enc_sr_ratio(int stage) const;
  std::int64_t dec_sr_ratio(int stage) const;

  bool operator==(const ModelConfig&) const = default;
};

struct Violation {
  std::string field;
  std::string rule;
};

using ValidationReport = std::vector<Violation>;

ValidationReport validate(const ModelConfig& config);
std::string format_report(const ValidationReport& report);
// Throws ConfigError listing every violation.
void require_valid(const ModelConfig& config);

const std::vector<std::string>& preset_names();
// Throws UnknownPresetError.
ModelConfig preset(std::string_view name);

// Field names used in config files; they match the struct members.
const std::vector<std::string>& model_config_keys();
KvDocument to_kv(const ModelConfig& config);
// Applies every model key present in `doc` on top of `base`. Keys that are
// not model fields are an error unless `ignore_unknown` is set.
ModelConfig apply_kv(ModelConfig base, const KvDocument& doc, bool ignore_unknown = false);
std::string serialize(const ModelConfig& config);
ModelConfig parse_model_config(std::string_view text);

}  // namespace viteraser
