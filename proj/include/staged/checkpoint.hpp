#pragma once

#include "staged/model.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

/**
 * @file checkpoint.hpp
 * @brief Binary container for trained weights.
 *
 * Layout (all integers little-endian u64 unless noted, doubles IEEE-754 LE):
 *
 *     "STAGEDCK"            8-byte magic
 *     version               u32, currently 1
 *     fingerprint_len       bytes of the JSON fingerprint that follows
 *     fingerprint           UTF-8 JSON (dims, seed, K, T, ...)
 *     tensor_count
 *     repeated tensor_count times:
 *       name_len, name bytes, rows, cols, rows*cols doubles (row-major)
 *
 * Values are written as raw bits, so save/load round trips are bit-exact.
 */

namespace staged {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
  nlohmann::json fingerprint = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  void add(const std::string& prefix, const ParamStore& store) {
    for (std::size_t i = 0; i < store.size(); ++i) tensors.emplace_back(prefix + store.param(i).name, store.value(i));
  }

  const Matrix& tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors)
      if (n == name) return m;
    throw DataError("checkpoint has no tensor '" + name + "'");
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'A', 'G', 'E', 'D', 'C', 'K'};

namespace detail {
template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(path + ": truncated checkpoint");
  return v;
}

inline std::string read_string(std::istream& in, const std::string& path) {
  const auto len = read_raw<std::uint64_t>(in, path);
  if (len > (1ULL << 32)) throw DataError(path + ": implausible string length in checkpoint");
  std::string s(len, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw DataError(path + ": truncated checkpoint");
  return s;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::write_raw(out, std::uint32_t{1});
  const std::string fp = ckpt.fingerprint.dump();
  detail::write_raw(out, static_cast<std::uint64_t>(fp.size()));
  out.write(fp.data(), static_cast<std::streamsize>(fp.size()));
  detail::write_raw(out, static_cast<std::uint64_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    detail::write_raw(out, static_cast<std::uint64_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_raw(out, static_cast<std::uint64_t>(m.rows()));
    detail::write_raw(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.values().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw DataError(path + ": not a checkpoint file");
  }
  if (const auto version = detail::read_raw<std::uint32_t>(in, path); version != 1) {
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  try {
    ckpt.fingerprint = nlohmann::json::parse(detail::read_string(in, path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": bad fingerprint: " + e.what());
  }
  const auto count = detail::read_raw<std::uint64_t>(in, path);
  for (std::uint64_t t = 0; t < count; ++t) {
    std::string name = detail::read_string(in, path);
    const auto rows = detail::read_raw<std::uint64_t>(in, path);
    const auto cols = detail::read_raw<std::uint64_t>(in, path);
    if (rows > (1ULL << 24) || cols > (1ULL << 24)) throw DataError(path + ": implausible tensor shape");
    std::vector<double> values(rows * cols);
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw DataError(path + ": truncated tensor '" + name + "'");
    }
    ckpt.tensors.emplace_back(std::move(name), Matrix(rows, cols, std::move(values)));
  }
  return ckpt;
}

/// Copies tensors named `prefix + param name` back into `store`.
inline void restore_params(const Checkpoint& ckpt, const std::string& prefix, ParamStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Matrix& m = ckpt.tensor(prefix + store.param(i).name);
    require_same_shape(store.value(i), m, "restore_params");
    store.value(i) = m;
  }
}

}  // namespace staged
