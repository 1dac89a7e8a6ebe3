#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace viteraser {

// Versioned container of named tensors plus string metadata.
//
// Layout (little-endian):
//   "VTCK" | u32 version | u64 n | n bytes of JSON metadata (sorted keys)
//   u32 tensor count, then per tensor in name order:
//     u32 name length | name | u8 dtype | u32 ndim | i64 dims[ndim] | raw data
//   u64 FNV-1a hash of every preceding byte
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::map<std::string, torch::Tensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError on a bad magic, version mismatch, truncation or
// checksum failure.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace viteraser
