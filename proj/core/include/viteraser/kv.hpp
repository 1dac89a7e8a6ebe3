#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace viteraser {

// Flat `key = value` document. Lines starting with '#' are comments; key
// order is preserved and duplicate keys are rejected.
class KvDocument {
 public:
  static KvDocument parse(std::string_view text);
  static KvDocument load(const std::string& path);

  std::string str() const;
  void save(const std::string& path) const;

  // Inserts or replaces.
  void set(const std::string& key, std::string value);
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const { return get(key).has_value(); }
  bool erase(const std::string& key);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Value codecs shared by every config type.
namespace kv {

std::string format_double(double v);
std::int64_t parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& value);
std::vector<double> parse_double_list(const std::string& key, const std::string& value);

template <typename Range>
std::string join_ints(const Range& values) {
  std::string out;
  for (auto v : values) {
    if (!out.empty()) out += ",";
    out += std::to_string(v);
  }
  return out;
}

template <typename Range>
std::string join_doubles(const Range& values) {
  std::string out;
  for (auto v : values) {
    if (!out.empty()) out += ",";
    out += format_double(v);
  }
  return out;
}

}  // namespace kv
}  // namespace viteraser
