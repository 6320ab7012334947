#pragma once

// Binary parameter snapshot container.
//
// All integers and floats are little-endian. One snapshot is:
//
//   bytes  0..3   magic "CSNP"
//   u32           format version (kSnapshotVersion)
//   u32           layer count L
//   L times:      u32 name length, name bytes (no terminator), u64 element count
//   L times:      element count x f64 values
//   u64           FNV-1a 64 checksum of every preceding byte of this snapshot
//
// Decoding rejects a wrong magic, an unknown version, a short buffer and a
// checksum mismatch with CorruptLogError.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coast/error.hpp"
#include "coast/params.hpp"

namespace coast {

inline constexpr std::uint32_t kSnapshotVersion = 1;

constexpr std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                                std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void checksum_from(std::size_t start) {
    u64(fnv1a64(std::span(buf_).subspan(start)));
  }

  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return get_le<std::uint8_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Reads a trailing u64 and compares it against the hash of [start, pos).
  void verify_checksum_from(std::size_t start, std::string_view what) {
    const std::uint64_t expected = fnv1a64(data_.subspan(start, pos_ - start));
    if (u64() != expected) throw CorruptLogError(std::string(what) + ": checksum mismatch");
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptLogError("unexpected end of data (truncated file?)");
  }

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline void write_snapshot(ByteWriter& w, const LayeredParams& p) {
  const std::size_t start = w.size();
  w.bytes("CSNP");
  w.u32(kSnapshotVersion);
  w.u32(static_cast<std::uint32_t>(p.num_layers()));
  for (const auto& l : p.layers()) {
    w.u32(static_cast<std::uint32_t>(l.name.size()));
    w.bytes(l.name);
    w.u64(l.values.size());
  }
  for (const auto& l : p.layers())
    for (double v : l.values) w.f64(v);
  w.checksum_from(start);
}

inline LayeredParams read_snapshot(ByteReader& r) {
  const std::size_t start = r.pos();
  if (r.bytes(4) != "CSNP") throw CorruptLogError("snapshot: bad magic");
  if (const auto v = r.u32(); v != kSnapshotVersion)
    throw CorruptLogError("snapshot: unsupported version " + std::to_string(v));
  const std::uint32_t n_layers = r.u32();
  Architecture arch;
  for (std::uint32_t j = 0; j < n_layers; ++j) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 8) throw CorruptLogError("snapshot: layer length exceeds data");
    arch.push_back({std::move(name), static_cast<std::size_t>(n)});
  }
  std::vector<Layer> layers;
  layers.reserve(arch.size());
  for (const auto& s : arch) {
    Layer l{s.name, std::vector<double>(s.size)};
    for (auto& v : l.values) v = r.f64();
    layers.push_back(std::move(l));
  }
  r.verify_checksum_from(start, "snapshot");
  return LayeredParams(std::move(layers));
}

inline std::vector<std::uint8_t> encode_snapshot(const LayeredParams& p) {
  ByteWriter w;
  write_snapshot(w, p);
  return w.take();
}

inline LayeredParams decode_snapshot(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto p = read_snapshot(r);
  if (r.remaining() != 0) throw CorruptLogError("snapshot: trailing bytes");
  return p;
}

}  // namespace coast
