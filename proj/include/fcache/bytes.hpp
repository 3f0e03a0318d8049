#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fcache/error.hpp"

namespace fcache {

static_assert(std::endian::native == std::endian::little, "on-disk formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;
/// Continues a running CRC32; crc32_update(0, b) == crc32(b).
std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes) noexcept;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(v); }
  void f64(double v) { put(v); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void tag(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void zeros(std::size_t n) { buf_.resize(buf_.size() + n, 0); }

  // LEB128
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      buf_.push_back(static_cast<std::uint8_t>(v | 0x80));
      v >>= 7;
    }
    buf_.push_back(static_cast<std::uint8_t>(v));
  }

  std::size_t size() const noexcept { return buf_.size(); }
  std::vector<std::uint8_t>& buffer() noexcept { return buf_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

 private:
  template <typename T>
  void put(T v) {
    const auto pos = buf_.size();
    buf_.resize(pos + sizeof(T));
    std::memcpy(buf_.data() + pos, &v, sizeof(T));
  }

  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every overrun throws `Error` of the configured kind.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data, ErrorKind on_error = ErrorKind::Decode)
      : data_(data), on_error_(on_error) {}

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }

  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  bool tag(std::string_view s) {
    auto b = bytes(s.size());
    return std::memcmp(b.data(), s.data(), s.size()) == 0;
  }

  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = u8();
      v |= std::uint64_t(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    throw Error(on_error_, "varint longer than 10 bytes");
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining())
      throw Error(on_error_, "unexpected end of data: need " + std::to_string(n) + " bytes, have " +
                                 std::to_string(remaining()));
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorKind on_error_;
};

}  // namespace fcache
