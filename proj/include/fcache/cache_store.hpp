#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fcache/channel_aug.hpp"
#include "fcache/codec.hpp"
#include "fcache/tensor.hpp"
#include "fcache/token_aug.hpp"

namespace fcache {

enum class AugKind : std::uint8_t { None = 0, Channel = 1, Token = 2 };

const char* to_string(AugKind kind) noexcept;

inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr std::size_t kCacheHeaderBytes = 128;
inline constexpr std::size_t kIndexEntryBytes = 40;
inline constexpr std::size_t kMaxCacheRank = 8;
inline constexpr std::size_t kDefaultChunkSize = 2;

/// Dataset-level augmentation metadata (the per-sample token matches travel
/// with each sample record).
struct AugMetadata {
  AugKind kind = AugKind::None;
  ChannelSelection channels;            // kind == Channel
  double alpha = 0.0;                   // kind == Token
  std::uint32_t token_count = 0;        // N of the N×D activations
  std::uint32_t tokens_per_sample = 0;  // round(alpha * N)
};

struct CacheHeader {
  std::uint32_t version = kCacheVersion;
  Shape sample_shape;
  std::uint64_t sample_count = 0;
  std::uint32_t chunk_size = kDefaultChunkSize;
  CodecParams codec;
  AugKind aug_kind = AugKind::None;
  std::uint8_t label_width = 4;
  std::uint64_t seed = 0;
  std::uint64_t aug_meta_bytes = 0;

  std::uint64_t chunk_count() const noexcept {
    return chunk_size == 0 ? 0 : (sample_count + chunk_size - 1) / chunk_size;
  }
};

struct ChunkIndexEntry {
  std::uint32_t ordinal = 0;
  std::uint64_t offset = 0;  // absolute file offset of the chunk record
  std::uint64_t length = 0;  // feature chunk plus optional augmentation chunk
  std::uint32_t crc = 0;     // CRC32 of the whole record
  std::uint64_t first_sample = 0;
  std::uint64_t last_sample = 0;  // inclusive

  friend bool operator==(const ChunkIndexEntry&, const ChunkIndexEntry&) = default;
};

/// One sample to be cached. `aug_stored` is the selected flipped-input
/// channels (x×H×W) or the selected augmented tokens (m×D).
struct SampleRecord {
  Tensor features;
  std::int64_t label = 0;
  std::optional<Tensor> aug_stored;
  std::vector<TokenMatch> token_matches;
};

struct CachedSample {
  std::uint64_t index = 0;
  Tensor features;
  std::int64_t label = 0;
  std::optional<Tensor> aug_stored;
  std::vector<TokenMatch> token_matches;
};

struct BuildOptions {
  std::size_t chunk_size = kDefaultChunkSize;
  CodecParams codec;
  AugMetadata aug;
  std::uint8_t label_width = 4;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// Writes the cache to `path` atomically (temporary file + rename). Output
/// bytes depend only on the inputs, never on `workers`.
CacheHeader build_cache(std::span<const SampleRecord> samples, const BuildOptions& options,
                        const std::filesystem::path& path);

struct OpenOptions {
  /// Check every chunk CRC and the trailing file CRC at open time instead of
  /// on each read.
  bool verify_eagerly = false;
};

class CacheHandle {
 public:
  static CacheHandle open(const std::filesystem::path& path, OpenOptions options = {});

  const CacheHeader& header() const noexcept;
  const AugMetadata& aug_metadata() const noexcept;
  const std::vector<ChunkIndexEntry>& index() const noexcept;
  std::uint64_t chunk_count() const noexcept { return index().size(); }
  std::int64_t label(std::uint64_t sample) const;
  std::uint64_t file_size() const noexcept;

  /// Thread-safe; each call re-reads and CRC-checks the chunk record.
  std::vector<CachedSample> read_chunk(std::uint64_t ordinal) const;

  /// Full-file integrity scan: every chunk CRC plus the trailing file CRC.
  void verify() const;

 private:
  struct State;
  explicit CacheHandle(std::shared_ptr<const State> state) : state_(std::move(state)) {}
  std::shared_ptr<const State> state_;
};

/// Sample ids of one epoch: seeded chunk permutation, each chunk's samples
/// seeded-shuffled and emitted contiguously.
std::vector<std::uint64_t> epoch_order(std::uint64_t sample_count, std::uint64_t chunk_size, std::uint64_t seed);

/// Single-consumer stream over one shuffled epoch. Up to `prefetch` upcoming
/// chunks are decoded in the background; emitted order is unaffected.
class EpochStream {
 public:
  EpochStream(CacheHandle handle, std::uint64_t seed, std::size_t prefetch = 0);

  std::optional<CachedSample> next();

 private:
  void refill();

  CacheHandle handle_;
  std::uint64_t seed_;
  std::size_t prefetch_;
  std::vector<std::uint64_t> chunk_order_;
  std::size_t next_chunk_ = 0;
  std::deque<std::future<std::vector<CachedSample>>> pending_;
  std::vector<CachedSample> current_;
  std::vector<std::size_t> current_order_;
  std::size_t current_pos_ = 0;
};

EpochStream shuffled_epoch_iter(const CacheHandle& handle, std::uint64_t seed, std::size_t prefetch = 0);

}  // namespace fcache
