#include "fcache/bytes.hpp"

#include <algorithm>

#include <zlib.h>

namespace fcache {

std::uint32_t crc32_update(std::uint32_t crc, std::span<const std::uint8_t> bytes) noexcept {
  uLong c = crc;
  // zlib takes uInt lengths; feed large buffers in pieces.
  constexpr std::size_t kPiece = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kPiece) {
    const auto n = std::min(kPiece, bytes.size() - off);
    c = ::crc32(c, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(c);
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept { return crc32_update(0, bytes); }

}  // namespace fcache
