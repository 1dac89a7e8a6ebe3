#include "viteraser/config.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "viteraser/errors.hpp"

namespace viteraser {

std::string_view to_string(BlockType type) {
  switch (type) {
    case BlockType::kSwin:
      return "swin";
    case BlockType::kSwinV2:
      return "swinv2";
    case BlockType::kPvt:
      return "pvt";
  }
  return "?";
}

BlockType parse_block_type(std::string_view name) {
  if (name == "swin") return BlockType::kSwin;
  if (name == "swinv2") return BlockType::kSwinV2;
  if (name == "pvt") return BlockType::kPvt;
  throw ConfigError("block_type: expected swin, swinv2 or pvt, got '" + std::string(name) + "'");
}

std::int64_t ModelConfig::dec_depth(int stage) const {
  return stage < 4 ? enc_depths[3 - stage] : dec_last_depth;
}

std::int64_t ModelConfig::dec_channels(int stage) const {
  if (stage < 3) return enc_channels[2 - stage];
  return stage == 3 ? dec_last_in_channels : dec_last_out_channels;
}

std::int64_t ModelConfig::dec_block_channels(int stage) const {
  return stage < 4 ? enc_channels[3 - stage] : dec_last_in_channels;
}

std::int64_t ModelConfig::dec_heads(int stage) const {
  return stage < 4 ? enc_heads[3 - stage] : dec_last_heads;
}

std::int64_t ModelConfig::enc_sr_ratio(int stage) const { return std::int64_t{8} >> stage; }

std::int64_t ModelConfig::dec_sr_ratio(int stage) const {
  return stage < 4 ? enc_sr_ratio(3 - stage) : sra_reduction;
}

ValidationReport validate(const ModelConfig& c) {
  ValidationReport report;
  auto fail = [&](std::string field, std::string rule) {
    report.push_back({std::move(field), std::move(rule)});
  };
  auto positive = [&](const std::string& field, std::int64_t v) {
    if (v <= 0) fail(field, "must be positive");
    return v > 0;
  };

  bool stages_ok = true;
  for (int i = 0; i < 4; ++i) {
    const auto idx = "[" + std::to_string(i) + "]";
    stages_ok &= positive("enc_depths" + idx, c.enc_depths[i]);
    stages_ok &= positive("enc_channels" + idx, c.enc_channels[i]);
    stages_ok &= positive("enc_heads" + idx, c.enc_heads[i]);
  }
  const bool last_ok = positive("dec_last_depth", c.dec_last_depth) &
                       positive("dec_last_in_channels", c.dec_last_in_channels) &
                       positive("dec_last_out_channels", c.dec_last_out_channels) &
                       positive("dec_last_heads", c.dec_last_heads);
  positive("window_size", c.window_size);
  positive("sra_reduction", c.sra_reduction);
  if (!(c.ffn_expansion > 0.0) || !std::isfinite(c.ffn_expansion)) {
    fail("ffn_expansion", "must be a positive finite number");
  }
  if (positive("input_size", c.input_size) && c.input_size % 32 != 0) {
    fail("input_size", "input_size mod 32 must be 0");
  }

  const bool windowed = c.block_type != BlockType::kPvt;
  if (windowed && c.input_size > 0 && c.window_size > 0 && c.input_size / 32 < c.window_size) {
    fail("window_size", "input_size / 32 must be >= window_size");
  }

  for (int i = 0; i < 4; ++i) {
    if (c.enc_channels[i] <= 0 || c.enc_heads[i] <= 0) continue;
    {
      const auto idx = "[" + std::to_string(i) + "]";
      if (c.enc_channels[i] % c.enc_heads[i] != 0) {
        fail("enc_channels" + idx, "must be divisible by enc_heads" + idx);
      }
      // Every encoder width feeds a patch splitting layer in the decoder.
      if (c.enc_channels[i] % 4 != 0) fail("enc_channels" + idx, "must be divisible by 4");
    }
  }
  if (last_ok) {
    if (c.dec_last_in_channels % c.dec_last_heads != 0) {
      fail("dec_last_in_channels", "must be divisible by dec_last_heads");
    }
    if (c.dec_last_in_channels % 4 != 0) fail("dec_last_in_channels", "must be divisible by 4");
  }
  if (windowed && stages_ok && last_ok) {
    const auto c3 = c.dec_channels(2);
    if (c.dec_last_in_channels * 2 != c3) {
      fail("dec_last_in_channels", "must equal C3dec / 2 (= " + std::to_string(c3) + " / 2)");
    }
    if (c.dec_last_out_channels * 4 != c3) {
      fail("dec_last_out_channels", "must equal C3dec / 4 (= " + std::to_string(c3) + " / 4)");
    }
  }
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::string out;
  for (const auto& v : report) {
    if (!out.empty()) out += "; ";
    out += v.field + ": " + v.rule;
  }
  return out;
}

void require_valid(const ModelConfig& config) {
  auto report = validate(config);
  if (!report.empty()) throw ConfigError("invalid model config: " + format_report(report));
}

namespace {

#define VITERASER_UNPAREN(...) __VA_ARGS__
#define PRESET(name, type, depths, channels, heads, in_c, out_c, depth, nheads, window, sra, ffn, size) \
  {name, ModelConfig{BlockType::type, {VITERASER_UNPAREN depths}, {VITERASER_UNPAREN channels},      \
                     {VITERASER_UNPAREN heads}, depth, in_c, out_c, nheads, window, sra, ffn, size}},

const std::vector<std::pair<std::string, ModelConfig>>& preset_table() {
  static const std::vector<std::pair<std::string, ModelConfig>> table = {
#include "preset_table.inc"
  };
  return table;
}

#undef PRESET
#undef VITERASER_UNPAREN

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : preset_table()) out.push_back(name);
    return out;
  }();
  return names;
}

ModelConfig preset(std::string_view name) {
  for (const auto& [n, config] : preset_table()) {
    if (n == name) return config;
  }
  throw UnknownPresetError(std::string(name));
}

const std::vector<std::string>& model_config_keys() {
  static const std::vector<std::string> keys = {
      "block_type",           "enc_depths",     "enc_channels",  "enc_heads",
      "dec_last_depth",       "dec_last_in_channels", "dec_last_out_channels",
      "dec_last_heads",       "window_size",    "sra_reduction", "ffn_expansion",
      "input_size"};
  return keys;
}

KvDocument to_kv(const ModelConfig& c) {
  KvDocument doc;
  doc.set("block_type", std::string(to_string(c.block_type)));
  doc.set("enc_depths", kv::join_ints(c.enc_depths));
  doc.set("enc_channels", kv::join_ints(c.enc_channels));
  doc.set("enc_heads", kv::join_ints(c.enc_heads));
  doc.set("dec_last_depth", std::to_string(c.dec_last_depth));
  doc.set("dec_last_in_channels", std::to_string(c.dec_last_in_channels));
  doc.set("dec_last_out_channels", std::to_string(c.dec_last_out_channels));
  doc.set("dec_last_heads", std::to_string(c.dec_last_heads));
  doc.set("window_size", std::to_string(c.window_size));
  doc.set("sra_reduction", std::to_string(c.sra_reduction));
  doc.set("ffn_expansion", kv::format_double(c.ffn_expansion));
  doc.set("input_size", std::to_string(c.input_size));
  return doc;
}

namespace {

std::array<std::int64_t, 4> parse_stage_list(const std::string& key, const std::string& value) {
  auto list = kv::parse_int_list(key, value);
  if (list.size() != 4) throw ConfigError(key + ": expected 4 comma-separated integers");
  return {list[0], list[1], list[2], list[3]};
}

}  // namespace

ModelConfig apply_kv(ModelConfig c, const KvDocument& doc, bool ignore_unknown) {
  for (const auto& [key, value] : doc.entries()) {
    if (key == "block_type") {
      c.block_type = parse_block_type(value);
    } else if (key == "enc_depths") {
      c.enc_depths = parse_stage_list(key, value);
    } else if (key == "enc_channels") {
      c.enc_channels = parse_stage_list(key, value);
    } else if (key == "enc_heads") {
      c.enc_heads = parse_stage_list(key, value);
    } else if (key == "dec_last_depth") {
      c.dec_last_depth = kv::parse_int(key, value);
    } else if (key == "dec_last_in_channels") {
      c.dec_last_in_channels = kv::parse_int(key, value);
    } else if (key == "dec_last_out_channels") {
      c.dec_last_out_channels = kv::parse_int(key, value);
    } else if (key == "dec_last_heads") {
      c.dec_last_heads = kv::parse_int(key, value);
    } else if (key == "window_size") {
      c.window_size = kv::parse_int(key, value);
    } else if (key == "sra_reduction") {
      c.sra_reduction = kv::parse_int(key, value);
    } else if (key == "ffn_expansion") {
      c.ffn_expansion = kv::parse_double(key, value);
    } else if (key == "input_size") {
      c.input_size = kv::parse_int(key, value);
    } else if (!ignore_unknown) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  return c;
}

std::string serialize(const ModelConfig& config) { return to_kv(config).str(); }

ModelConfig parse_model_config(std::string_view text) {
  const auto doc = KvDocument::parse(text);
  for (const auto& key : model_config_keys()) {
    if (!doc.contains(key)) throw ConfigError("missing config key: " + key);
  }
  return apply_kv(ModelConfig{}, doc);
}

}  // namespace viteraser
