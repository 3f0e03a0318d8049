#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fcache/tensor.hpp"

namespace fcache {

enum class Transform : std::uint8_t {
  None = 0,
  /// Integer lifting (S-transform) across the chunk's samples followed by a
  /// two-level integer Haar on 4×4 spatial blocks.
  BlockDecorrelate = 1,
};

struct CodecParams {
  /// Absolute elementwise error bound; 0 selects the lossless path.
  double tolerance = 1e-3;
  Transform transform = Transform::BlockDecorrelate;

  static constexpr std::size_t kBlockEdge = 4;
};

/// k samples of one shape compressed as a unit. `payload` is the codec
/// stream; the fixed chunk header is accounted for in `encoded_bytes`.
struct EncodedChunk {
  CodecParams params;
  Shape sample_shape;
  std::uint32_t sample_count = 0;
  std::vector<std::uint8_t> payload;
  std::uint64_t raw_bytes = 0;
  std::uint64_t encoded_bytes = 0;
};

/// Bytes of the serialized chunk outside the payload (header + CRC trailer).
std::size_t chunk_overhead_bytes(std::size_t rank) noexcept;

EncodedChunk encode(std::span<const Tensor> samples, const CodecParams& params);
std::vector<Tensor> decode(const EncodedChunk& chunk);

double compression_ratio(const EncodedChunk& chunk) noexcept;

/// Chunk byte layout: "AFC1", transform u8, tau f64, k u32, rank u32, dims
/// u32[rank], raw size u64, payload size u64, payload, CRC32(payload) u32.
std::vector<std::uint8_t> serialize_chunk(const EncodedChunk& chunk);

/// Parses one chunk from the front of `bytes`; `consumed` receives its length.
/// Throws Decode on truncation or bad magic, Corruption on CRC mismatch.
EncodedChunk parse_chunk(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

}  // namespace fcache
