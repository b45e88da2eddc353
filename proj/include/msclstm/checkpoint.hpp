#pragma once

// Binary checkpoint, little-endian, no padding:
//
//   "MSCL" | u32 version | u32 F | u64 fingerprint
//   u32 norm_count | norm_count × (f32 mean, f32 std)
//   u32 tensor_count | per tensor: u16 name_len, name, u8 ndim, ndim × u32 dim,
//                                  prod(dims) × f32 (row-major)

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>

#include "msclstm/data.hpp"
#include "msclstm/errors.hpp"
#include "msclstm/model.hpp"

namespace msclstm {

inline constexpr std::string_view kCheckpointMagic = "MSCL";
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kMaxFeatureCount = 1u << 20;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelParams<float> params;
  NormStats norm;
  std::uint64_t fingerprint = 0;

  std::size_t feature_count() const { return params.feature_count; }
};

inline std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

namespace detail {

class ByteWriter {
 public:
  template <typename U>
  void put(U v) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }
  std::string_view get_bytes(std::size_t n, const char* what) {
    need(n, what);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(source_ + ": " + msg + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw FormatError(source_ + ": truncated file, " + what + " needs " + std::to_string(n) +
                        " byte(s) at byte offset " + std::to_string(pos_) + " but only " +
                        std::to_string(remaining()) + " remain");
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  if (c.norm.size() != c.feature_count())
    throw UsageError("checkpoint has " + std::to_string(c.norm.size()) + " norm stats for F=" +
                     std::to_string(c.feature_count()));
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put(c.version);
  w.put(static_cast<std::uint32_t>(c.feature_count()));
  w.put(c.fingerprint);
  w.put(static_cast<std::uint32_t>(c.norm.size()));
  for (const auto& s : c.norm) {
    w.put_f32(static_cast<float>(s.mean));
    w.put_f32(static_cast<float>(s.std));
  }
  std::uint32_t count = 0;
  c.params.for_each_tensor([&](const std::string&, const Tensor<float>&, bool) { ++count; });
  w.put(count);
  c.params.for_each_tensor([&](const std::string& name, const Tensor<float>& t, bool) {
    w.put(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.put_f32(v);
  });
  return w.take();
}

/// Parses and validates a checkpoint image. Every tensor must match the
/// architecture's canonical name, order and shape for the stored F.
inline Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source = "checkpoint") {
  detail::ByteReader r(bytes, source);
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, 4) != kCheckpointMagic)
    throw FormatError(source + ": not a checkpoint (bad magic)");
  r.get_bytes(4, "magic");
  Checkpoint c;
  c.version = r.get<std::uint32_t>("version");
  if (c.version != kCheckpointVersion)
    throw VersionError(source + ": unsupported checkpoint version " + std::to_string(c.version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t F = r.get<std::uint32_t>("feature count");
  if (F < 2 || F > kMaxFeatureCount) r.fail("implausible feature count " + std::to_string(F));
  c.fingerprint = r.get<std::uint64_t>("fingerprint");
  const std::uint32_t norm_count = r.get<std::uint32_t>("norm count");
  if (norm_count != F)
    r.fail("norm count " + std::to_string(norm_count) + " does not match F=" + std::to_string(F));
  c.norm.resize(norm_count);
  for (auto& s : c.norm) {
    s.mean = r.get_f32("norm mean");
    s.std = r.get_f32("norm std");
  }

  c.params = build_model<float>(F, 0);
  std::uint32_t expected = 0;
  c.params.for_each_tensor([&](const std::string&, const Tensor<float>&, bool) { ++expected; });
  const std::uint32_t count = r.get<std::uint32_t>("tensor count");
  if (count != expected)
    r.fail("tensor count " + std::to_string(count) + ", architecture has " + std::to_string(expected));
  c.params.for_each_tensor([&](const std::string& name, Tensor<float>& t, bool) {
    const std::uint16_t len = r.get<std::uint16_t>("tensor name length");
    const std::string got(r.get_bytes(len, "tensor name"));
    if (got != name) r.fail("tensor '" + got + "' where '" + name + "' was expected");
    const std::uint8_t ndim = r.get<std::uint8_t>("tensor rank");
    Shape shape;
    for (std::uint8_t d = 0; d < ndim; ++d) shape.push_back(r.get<std::uint32_t>("tensor dim"));
    if (shape != t.shape())
      r.fail("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " + shape_string(t.shape()));
    for (float& v : t.data()) v = r.get_f32("tensor values");
  });
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing byte(s)");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

/// Throws CompatibilityError unless `ds` has the checkpoint's feature layout.
inline void require_compatible(const Checkpoint& c, const Dataset& ds) {
  if (ds.features() != c.feature_count() || ds.fingerprint() != c.fingerprint)
    throw CompatibilityError("dataset (F=" + std::to_string(ds.features()) + ", fingerprint " +
                             fingerprint_hex(ds.fingerprint()) + ") does not match checkpoint (F=" +
                             std::to_string(c.feature_count()) + ", fingerprint " +
                             fingerprint_hex(c.fingerprint) + ")");
}

}  // namespace msclstm
