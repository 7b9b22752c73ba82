#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "idm/tensor.hpp"

namespace idm {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Versioned binary container:
//   magic "IDMCKPT1"
//   u32 meta_len, meta bytes   ("key=value\n" lines; self-describing config)
//   u32 tensor_count
//   per tensor: u32 name_len, name bytes, u32 rank, u64 extents[rank],
//               f64 payload (little-endian, row-major)
// Ordering is preserved so a save/load/save cycle is byte-exact.
struct CheckpointData {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const std::string* find_meta(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }
  const Tensor* find_tensor(const std::string& name) const {
    for (const auto& nt : tensors)
      if (nt.first == name) return &nt.second;
    return nullptr;
  }
};

namespace detail {

constexpr char kCkptMagic[8] = {'I', 'D', 'M', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError(std::string("checkpoint truncated while reading ") + what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(detail::kCkptMagic, sizeof(detail::kCkptMagic));

  std::string meta;
  for (const auto& kv : data.meta) meta += kv.first + "=" + kv.second + "\n";
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(data.tensors.size()));
  for (const auto& [name, t] : data.tensors) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) {
      detail::write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    }
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("write failure on checkpoint: " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kCkptMagic, sizeof(magic)) != 0) {
    throw IoError("not a checkpoint file (bad magic): " + path);
  }

  CheckpointData data;
  const auto meta_len = detail::read_pod<std::uint32_t>(is, "meta length");
  std::string meta(meta_len, '\0');
  is.read(meta.data(), meta_len);
  if (!is) throw IoError("checkpoint truncated while reading meta");
  std::size_t pos = 0;
  while (pos < meta.size()) {
    std::size_t nl = meta.find('\n', pos);
    if (nl == std::string::npos) nl = meta.size();
    const std::string line = meta.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed meta line: " + line);
    data.meta.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }

  const auto n_tensors = detail::read_pod<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(is, "tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("checkpoint truncated while reading tensor name");
    const auto rank = detail::read_pod<std::uint32_t>(is, "tensor rank");
    Shape shape(rank);
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is, "extent"));
    }
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw IoError("checkpoint truncated while reading tensor payload");
    data.tensors.emplace_back(std::move(name), std::move(t));
  }
  return data;
}

}  // namespace idm
