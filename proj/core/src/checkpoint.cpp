#include "viteraser/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "viteraser/errors.hpp"

namespace viteraser {
namespace {

constexpr char kMagic[4] = {'V', 'T', 'C', 'K'};

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 1;
    case torch::kFloat64: return 2;
    case torch::kInt64: return 3;
    case torch::kUInt8: return 4;
    case torch::kInt32: return 5;
    case torch::kBool: return 6;
    default: throw CheckpointError(std::string("unsupported tensor dtype: ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_code(std::uint8_t c) {
  switch (c) {
    case 1: return torch::kFloat32;
    case 2: return torch::kFloat64;
    case 3: return torch::kInt64;
    case 4: return torch::kUInt8;
    case 5: return torch::kInt32;
    case 6: return torch::kBool;
    default: throw CheckpointError("corrupt checkpoint: unknown dtype code " + std::to_string(c));
  }
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// The host is assumed little-endian (x86-64, aarch64).
class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t n) : data_(data), size_(n) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > size_ - pos_) throw CheckpointError("corrupt checkpoint: truncated file");
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(Checkpoint::kVersion);
  nlohmann::json meta(ckpt.metadata);
  const auto text = meta.dump();
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text.data(), text.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    const auto t = tensor.detach().to(torch::kCPU).contiguous();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(dtype_code(t.scalar_type()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.put<std::int64_t>(d);
    w.put_bytes(t.data_ptr(), t.nbytes());
  }
  w.put<std::uint64_t>(fnv1a(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 4 + 8) throw CheckpointError("corrupt checkpoint: truncated file");
  Reader r(bytes.data(), bytes.size() - 8);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(Checkpoint::kVersion) + ")");
  }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a(bytes.data(), bytes.size() - 8)) {
    throw CheckpointError("corrupt checkpoint: checksum mismatch");
  }

  Checkpoint ckpt;
  const auto meta_len = r.get<std::uint64_t>();
  const auto* meta = reinterpret_cast<const char*>(r.take(meta_len));
  try {
    ckpt.metadata = nlohmann::json::parse(meta, meta + meta_len).get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(reinterpret_cast<const char*>(r.take(name_len)), name_len);
    const auto dtype = dtype_from_code(r.get<std::uint8_t>());
    const auto ndim = r.get<std::uint32_t>();
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) {
      d = r.get<std::int64_t>();
      if (d < 0) throw CheckpointError("corrupt checkpoint: negative dimension");
    }
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    std::memcpy(t.data_ptr(), r.take(t.nbytes()), t.nbytes());
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  if (r.pos() != bytes.size() - 8) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  // Write to a sibling file and rename, so an interrupted save never leaves
  // a half-written checkpoint under the final name.
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("cannot write checkpoint '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError("cannot move checkpoint into place at '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace viteraser
