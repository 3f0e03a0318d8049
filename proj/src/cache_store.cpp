#include "fcache/cache_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "fcache/bytes.hpp"
#include "fcache/error.hpp"
#include "fcache/rng.hpp"

namespace fcache {

const char* to_string(AugKind kind) noexcept {
  switch (kind) {
    case AugKind::None: return "none";
    case AugKind::Channel: return "channel";
    case AugKind::Token: return "token";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kCacheMagic = "AFCACHE1";
constexpr std::size_t kHeaderCrcOffset = 88;
constexpr std::size_t kTokenMatchBytes = 16;

std::uint64_t labels_offset() { return kCacheHeaderBytes; }
std::uint64_t index_offset(const CacheHeader& h) { return labels_offset() + h.sample_count * h.label_width; }
std::uint64_t meta_offset(const CacheHeader& h) { return index_offset(h) + h.chunk_count() * kIndexEntryBytes; }
std::uint64_t payload_offset(const CacheHeader& h) { return meta_offset(h) + h.aug_meta_bytes; }

std::uint64_t aug_meta_size(const AugMetadata& aug, std::uint64_t n) {
  switch (aug.kind) {
    case AugKind::None: return 0;
    case AugKind::Channel: return 8 + 4 + 4 + 4 * aug.channels.indices.size();
    case AugKind::Token: return 8 + 4 + 4 + n * aug.tokens_per_sample * kTokenMatchBytes;
  }
  return 0;
}

std::vector<std::uint8_t> encode_header(const CacheHeader& h) {
  ByteWriter w;
  w.tag(kCacheMagic);
  w.u32(h.version);
  w.u64(h.sample_count);
  w.u32(h.chunk_size);
  w.u32(static_cast<std::uint32_t>(h.sample_shape.size()));
  for (std::size_t i = 0; i < kMaxCacheRank; ++i)
    w.u32(i < h.sample_shape.size() ? static_cast<std::uint32_t>(h.sample_shape[i]) : 0);
  w.f64(h.codec.tolerance);
  w.u8(static_cast<std::uint8_t>(h.codec.transform));
  w.u8(static_cast<std::uint8_t>(h.aug_kind));
  w.u8(h.label_width);
  w.u8(0);
  w.u64(h.seed);
  w.u64(h.aug_meta_bytes);
  w.u32(crc32(std::span(w.buffer()).first(kHeaderCrcOffset)));
  w.zeros(kCacheHeaderBytes - w.size());
  return w.take();
}

CacheHeader decode_header(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorKind::Format);
  if (!r.tag(kCacheMagic)) throw Error(ErrorKind::Format, "not a feature cache file (bad magic)");
  CacheHeader h;
  h.version = r.u32();
  if (h.version != kCacheVersion)
    throw Error(ErrorKind::Format, "unsupported cache format version " + std::to_string(h.version));
  if (crc32(bytes.first(kHeaderCrcOffset)) != [&] {
        ByteReader c(bytes.subspan(kHeaderCrcOffset, 4), ErrorKind::Format);
        return c.u32();
      }())
    throw Error(ErrorKind::Corruption, "header CRC mismatch");
  h.sample_count = r.u64();
  h.chunk_size = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > kMaxCacheRank) throw Error(ErrorKind::Format, "invalid sample rank");
  for (std::size_t i = 0; i < kMaxCacheRank; ++i) {
    const auto d = r.u32();
    if (i < rank) {
      if (d == 0) throw Error(ErrorKind::Format, "zero sample dimension");
      h.sample_shape.push_back(d);
    }
  }
  h.codec.tolerance = r.f64();
  const auto transform = r.u8();
  if (transform > 1) throw Error(ErrorKind::Format, "unknown transform id");
  h.codec.transform = static_cast<Transform>(transform);
  const auto aug = r.u8();
  if (aug > 2) throw Error(ErrorKind::Format, "unknown augmentation kind");
  h.aug_kind = static_cast<AugKind>(aug);
  h.label_width = r.u8();
  if (h.label_width != 1 && h.label_width != 2 && h.label_width != 4 && h.label_width != 8)
    throw Error(ErrorKind::Format, "unsupported label width");
  r.u8();
  h.seed = r.u64();
  h.aug_meta_bytes = r.u64();
  if (h.chunk_size == 0 || h.sample_count == 0) throw Error(ErrorKind::Format, "empty cache or zero chunk size");
  if (!std::isfinite(h.codec.tolerance) || h.codec.tolerance < 0) throw Error(ErrorKind::Format, "invalid tolerance");
  return h;
}

void write_label(ByteWriter& w, std::int64_t label, std::uint8_t width) {
  const auto u = static_cast<std::uint64_t>(label);
  for (std::uint8_t b = 0; b < width; ++b) w.u8(static_cast<std::uint8_t>(u >> (8 * b)));
}

std::vector<std::uint64_t> chunk_local_order(std::uint64_t count, std::uint64_t seed, std::uint64_t ordinal) {
  auto p = seeded_permutation(count, derive_seed(seed, ordinal + 1));
  return {p.begin(), p.end()};
}

std::vector<std::uint8_t> encode_record(std::span<const SampleRecord> samples, const BuildOptions& opt) {
  std::vector<Tensor> feats;
  feats.reserve(samples.size());
  for (const auto& s : samples) feats.push_back(s.features);
  auto record = serialize_chunk(encode(feats, opt.codec));

  if (samples.front().aug_stored) {
    std::vector<Tensor> aug;
    aug.reserve(samples.size());
    for (const auto& s : samples) aug.push_back(*s.aug_stored);
    auto extra = serialize_chunk(encode(aug, opt.codec));
    record.insert(record.end(), extra.begin(), extra.end());
  }
  return record;
}

void validate_samples(std::span<const SampleRecord> samples, const BuildOptions& opt) {
  if (samples.empty()) throw Error(ErrorKind::InvalidConfig, "cannot build an empty cache");
  if (opt.chunk_size == 0) throw Error(ErrorKind::InvalidConfig, "chunk size must be >= 1");
  if (opt.label_width != 1 && opt.label_width != 2 && opt.label_width != 4 && opt.label_width != 8)
    throw Error(ErrorKind::InvalidConfig, "label width must be 1, 2, 4 or 8 bytes");
  const Shape& shape = samples.front().features.shape();
  if (shape.size() > kMaxCacheRank) throw Error(ErrorKind::InvalidShape, "sample rank exceeds 8");

  std::optional<Shape> aug_shape;
  const auto& aug = opt.aug;
  if (aug.kind == AugKind::Channel) {
    if (shape.size() != 3) throw Error(ErrorKind::InvalidShape, "channel augmentation needs C×H×W samples");
    if (aug.channels.channel_count != shape[0])
      throw Error(ErrorKind::InvalidConfig, "channel selection was computed for a different channel count");
    if (!aug.channels.indices.empty()) aug_shape = Shape{aug.channels.indices.size(), shape[1], shape[2]};
  } else if (aug.kind == AugKind::Token) {
    if (shape.size() != 2) throw Error(ErrorKind::InvalidShape, "token augmentation needs N×D samples");
    if (aug.token_count != shape[0]) throw Error(ErrorKind::InvalidConfig, "token count disagrees with sample shape");
    if (aug.tokens_per_sample != selection_size(aug.alpha, aug.token_count))
      throw Error(ErrorKind::InvalidConfig, "tokens per sample must equal round(alpha * N)");
    if (aug.tokens_per_sample > 0) aug_shape = Shape{aug.tokens_per_sample, shape[1]};
  }

  const double max_label = std::ldexp(1.0, 8 * opt.label_width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.features.shape() != shape)
      throw Error(ErrorKind::ShapeMismatch, "sample " + std::to_string(i) + " has shape " +
                                                shape_to_string(s.features.shape()) + ", expected " +
                                                shape_to_string(shape));
    if (s.label < 0 || static_cast<double>(s.label) >= max_label)
      throw Error(ErrorKind::InvalidValue, "label of sample " + std::to_string(i) + " does not fit the label width");
    if (aug_shape) {
      if (!s.aug_stored || s.aug_stored->shape() != *aug_shape)
        throw Error(ErrorKind::ShapeMismatch, "augmentation payload of sample " + std::to_string(i) +
                                                  " is missing or has the wrong shape");
    } else if (s.aug_stored) {
      throw Error(ErrorKind::InvalidConfig, "sample " + std::to_string(i) + " carries an unexpected augmentation payload");
    }
    if (aug.kind == AugKind::Token) {
      if (s.token_matches.size() != aug.tokens_per_sample)
        throw Error(ErrorKind::InvalidConfig, "sample " + std::to_string(i) + " has the wrong number of token matches");
      for (const auto& m : s.token_matches)
        if (m.original >= aug.token_count || m.augmented >= aug.token_count)
          throw Error(ErrorKind::OutOfRange, "token match index out of range in sample " + std::to_string(i));
    } else if (!s.token_matches.empty()) {
      throw Error(ErrorKind::InvalidConfig, "token matches supplied without token augmentation");
    }
  }
}

// RAII read-only descriptor with positional reads.
class File {
 public:
  explicit File(const std::filesystem::path& path) : fd_(::open(path.c_str(), O_RDONLY | O_CLOEXEC)) {
    if (fd_ < 0) {
      const int err = errno;
      throw Error(err == ENOENT ? ErrorKind::NotFound : ErrorKind::Io,
                  "cannot open " + path.string() + ": " + std::strerror(err));
    }
    const off_t end = ::lseek(fd_, 0, SEEK_END);
    if (end < 0) throw Error(ErrorKind::Io, "cannot size " + path.string());
    size_ = static_cast<std::uint64_t>(end);
  }
  ~File() {
    if (fd_ >= 0) ::close(fd_);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  std::uint64_t size() const noexcept { return size_; }

  std::vector<std::uint8_t> read(std::uint64_t offset, std::uint64_t length) const {
    if (offset > size_ || length > size_ - offset)
      throw Error(ErrorKind::Corruption, "read past end of file (offset " + std::to_string(offset) + ")");
    std::vector<std::uint8_t> buf(length);
    std::uint64_t done = 0;
    while (done < length) {
      const ssize_t got = ::pread(fd_, buf.data() + done, length - done, static_cast<off_t>(offset + done));
      if (got < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::Io, std::string("read failed: ") + std::strerror(errno));
      }
      if (got == 0) throw Error(ErrorKind::Corruption, "unexpected end of file");
      done += static_cast<std::uint64_t>(got);
    }
    return buf;
  }

 private:
  int fd_;
  std::uint64_t size_ = 0;
};

}  // namespace

CacheHeader build_cache(std::span<const SampleRecord> samples, const BuildOptions& options,
                        const std::filesystem::path& path) {
  validate_samples(samples, options);

  CacheHeader h;
  h.sample_shape = samples.front().features.shape();
  h.sample_count = samples.size();
  h.chunk_size = static_cast<std::uint32_t>(options.chunk_size);
  h.codec = options.codec;
  h.aug_kind = options.aug.kind;
  h.label_width = options.label_width;
  h.seed = options.seed;
  h.aug_meta_bytes = aug_meta_size(options.aug, h.sample_count);

  ByteWriter prefix;
  prefix.bytes(encode_header(h));
  for (const auto& s : samples) write_label(prefix, s.label, h.label_width);
  const std::size_t index_pos = prefix.size();
  prefix.zeros(h.chunk_count() * kIndexEntryBytes);
  const auto& aug = options.aug;
  if (aug.kind == AugKind::Channel) {
    prefix.f64(aug.channels.gamma);
    prefix.u32(aug.channels.channel_count);
    prefix.u32(static_cast<std::uint32_t>(aug.channels.indices.size()));
    for (auto c : aug.channels.indices) prefix.u32(c);
  } else if (aug.kind == AugKind::Token) {
    prefix.f64(aug.alpha);
    prefix.u32(aug.token_count);
    prefix.u32(aug.tokens_per_sample);
    for (const auto& s : samples)
      for (const auto& m : s.token_matches) {
        prefix.u32(m.original);
        prefix.u32(m.augmented);
        prefix.f64(m.similarity);
      }
  }

  auto tmp = path;
  tmp += ".partial";
  std::vector<ChunkIndexEntry> index(h.chunk_count());
  try {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot create " + tmp.string());
    out.exceptions(std::ios::badbit | std::ios::failbit);
    out.write(reinterpret_cast<const char*>(prefix.buffer().data()), static_cast<std::streamsize>(prefix.size()));

    std::uint64_t offset = prefix.size();
    const unsigned workers = std::max(1u, options.workers);
    const std::size_t window = workers * 4;
    for (std::size_t base = 0; base < index.size(); base += window) {
      const std::size_t count = std::min(window, index.size() - base);
      std::vector<std::vector<std::uint8_t>> records(count);
      auto encode_one = [&](std::size_t i) {
        const std::size_t c = base + i;
        const std::size_t first = c * options.chunk_size;
        const std::size_t last = std::min(first + options.chunk_size, samples.size());
        records[i] = encode_record(samples.subspan(first, last - first), options);
      };
      if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) encode_one(i);
      } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) {
          pool.emplace_back([&, t] {
            try {
              for (std::size_t i = t; i < count; i += workers) encode_one(i);
            } catch (...) {
              errors[t] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t c = base + i;
        auto& e = index[c];
        e.ordinal = static_cast<std::uint32_t>(c);
        e.offset = offset;
        e.length = records[i].size();
        e.crc = crc32(records[i]);
        e.first_sample = c * options.chunk_size;
        e.last_sample = std::min<std::uint64_t>(e.first_sample + options.chunk_size, samples.size()) - 1;
        out.write(reinterpret_cast<const char*>(records[i].data()), static_cast<std::streamsize>(records[i].size()));
        offset += records[i].size();
      }
    }

    ByteWriter idx;
    for (const auto& e : index) {
      idx.u32(e.ordinal);
      idx.u64(e.offset);
      idx.u64(e.length);
      idx.u32(e.crc);
      idx.u64(e.first_sample);
      idx.u64(e.last_sample);
    }
    out.seekp(static_cast<std::streamoff>(index_pos));
    out.write(reinterpret_cast<const char*>(idx.buffer().data()), static_cast<std::streamsize>(idx.size()));
    out.close();

    // Trailing CRC over everything written so far.
    std::uint32_t file_crc = 0;
    {
      std::ifstream in(tmp, std::ios::binary);
      std::vector<std::uint8_t> buf(1 << 20);
      while (in) {
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        file_crc = crc32_update(file_crc, std::span(buf).first(static_cast<std::size_t>(in.gcount())));
      }
    }
    std::ofstream tail(tmp, std::ios::binary | std::ios::app);
    tail.exceptions(std::ios::badbit | std::ios::failbit);
    ByteWriter crc;
    crc.u32(file_crc);
    tail.write(reinterpret_cast<const char*>(crc.buffer().data()), 4);
    tail.close();
    std::filesystem::rename(tmp, path);
  } catch (const std::ios::failure& e) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::Io, "writing " + path.string() + " failed: " + e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::Io, e.what());
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
  return h;
}

struct CacheHandle::State {
  std::filesystem::path path;
  std::unique_ptr<File> file;
  CacheHeader header;
  AugMetadata aug;
  std::vector<std::int64_t> labels;
  std::vector<ChunkIndexEntry> index;
  std::vector<std::vector<TokenMatch>> token_matches;  // per sample, token caches only
};

CacheHandle CacheHandle::open(const std::filesystem::path& path, OpenOptions options) {
  auto st = std::make_shared<State>();
  st->path = path;
  st->file = std::make_unique<File>(path);
  const File& f = *st->file;
  if (f.size() < kCacheHeaderBytes + 4) throw Error(ErrorKind::Format, "file too small to be a feature cache");

  st->header = decode_header(f.read(0, kCacheHeaderBytes));
  const CacheHeader& h = st->header;
  if (payload_offset(h) + 4 > f.size()) throw Error(ErrorKind::Corruption, "metadata sections extend past end of file");

  {
    const auto raw = f.read(labels_offset(), h.sample_count * h.label_width);
    st->labels.resize(h.sample_count);
    for (std::uint64_t i = 0; i < h.sample_count; ++i) {
      std::uint64_t v = 0;
      for (std::uint8_t b = 0; b < h.label_width; ++b) v |= std::uint64_t(raw[i * h.label_width + b]) << (8 * b);
      st->labels[i] = static_cast<std::int64_t>(v);
    }
  }

  {
    const auto raw = f.read(index_offset(h), h.chunk_count() * kIndexEntryBytes);
    ByteReader r(raw, ErrorKind::Corruption);
    std::uint64_t expect_first = 0;
    std::uint64_t expect_offset = payload_offset(h);
    for (std::uint64_t c = 0; c < h.chunk_count(); ++c) {
      ChunkIndexEntry e;
      e.ordinal = r.u32();
      e.offset = r.u64();
      e.length = r.u64();
      e.crc = r.u32();
      e.first_sample = r.u64();
      e.last_sample = r.u64();
      const std::uint64_t expect_last = std::min(expect_first + h.chunk_size, h.sample_count) - 1;
      if (e.ordinal != c || e.first_sample != expect_first || e.last_sample != expect_last ||
          e.offset != expect_offset)
        throw Error(ErrorKind::Corruption, "chunk index entry " + std::to_string(c) + " is inconsistent");
      expect_first = e.last_sample + 1;
      expect_offset += e.length;
      st->index.push_back(e);
    }
    if (expect_offset + 4 != f.size())
      throw Error(ErrorKind::Corruption, "chunk index does not account for the file size");
  }

  if (h.aug_meta_bytes > 0) {
    const auto raw = f.read(meta_offset(h), h.aug_meta_bytes);
    ByteReader r(raw, ErrorKind::Format);
    st->aug.kind = h.aug_kind;
    if (h.aug_kind == AugKind::Channel) {
      st->aug.channels.gamma = r.f64();
      st->aug.channels.channel_count = r.u32();
      const auto x = r.u32();
      for (std::uint32_t i = 0; i < x; ++i) st->aug.channels.indices.push_back(r.u32());
    } else if (h.aug_kind == AugKind::Token) {
      st->aug.alpha = r.f64();
      st->aug.token_count = r.u32();
      st->aug.tokens_per_sample = r.u32();
      st->token_matches.resize(h.sample_count);
      for (auto& ms : st->token_matches)
        for (std::uint32_t i = 0; i < st->aug.tokens_per_sample; ++i) {
          TokenMatch m;
          m.original = r.u32();
          m.augmented = r.u32();
          m.similarity = r.f64();
          ms.push_back(m);
        }
    } else {
      throw Error(ErrorKind::Format, "augmentation metadata present without an augmentation kind");
    }
    if (r.remaining() != 0) throw Error(ErrorKind::Format, "augmentation metadata size mismatch");
  } else {
    st->aug.kind = h.aug_kind;
  }

  CacheHandle handle(std::move(st));
  if (options.verify_eagerly) handle.verify();
  return handle;
}

const CacheHeader& CacheHandle::header() const noexcept { return state_->header; }
const AugMetadata& CacheHandle::aug_metadata() const noexcept { return state_->aug; }
const std::vector<ChunkIndexEntry>& CacheHandle::index() const noexcept { return state_->index; }
std::uint64_t CacheHandle::file_size() const noexcept { return state_->file->size(); }

std::int64_t CacheHandle::label(std::uint64_t sample) const {
  if (sample >= state_->labels.size()) throw Error(ErrorKind::OutOfRange, "sample ordinal out of range");
  return state_->labels[sample];
}

void CacheHandle::verify() const {
  const File& f = *state_->file;
  for (const auto& e : state_->index) {
    if (crc32(f.read(e.offset, e.length)) != e.crc)
      throw Error(ErrorKind::Corruption, "CRC mismatch in chunk " + std::to_string(e.ordinal));
  }
  std::uint32_t crc = 0;
  const std::uint64_t body = f.size() - 4;
  constexpr std::uint64_t kBlock = 1 << 20;
  for (std::uint64_t off = 0; off < body; off += kBlock) crc = crc32_update(crc, f.read(off, std::min(kBlock, body - off)));
  const auto trailer = f.read(body, 4);
  ByteReader r(trailer, ErrorKind::Corruption);
  if (r.u32() != crc) throw Error(ErrorKind::Corruption, "file CRC mismatch");
}

std::vector<CachedSample> CacheHandle::read_chunk(std::uint64_t ordinal) const {
  const State& st = *state_;
  if (ordinal >= st.index.size())
    throw Error(ErrorKind::OutOfRange, "chunk ordinal " + std::to_string(ordinal) + " out of range (" +
                                           std::to_string(st.index.size()) + " chunks)");
  const auto& e = st.index[ordinal];
  const auto record = st.file->read(e.offset, e.length);
  if (crc32(record) != e.crc) throw Error(ErrorKind::Corruption, "CRC mismatch in chunk " + std::to_string(ordinal));

  const std::uint64_t count = e.last_sample - e.first_sample + 1;
  std::size_t used = 0;
  const EncodedChunk feat_chunk = parse_chunk(record, &used);
  if (feat_chunk.sample_shape != st.header.sample_shape || feat_chunk.sample_count != count)
    throw Error(ErrorKind::Decode, "chunk " + std::to_string(ordinal) + " metadata disagrees with the cache header");
  auto features = decode(feat_chunk);

  std::vector<Tensor> aug;
  if (used < record.size()) {
    std::size_t used_aug = 0;
    const EncodedChunk aug_chunk = parse_chunk(std::span(record).subspan(used), &used_aug);
    if (aug_chunk.sample_count != count) throw Error(ErrorKind::Decode, "augmentation chunk sample count mismatch");
    aug = decode(aug_chunk);
    used += used_aug;
  }
  if (used != record.size()) throw Error(ErrorKind::Decode, "trailing bytes in chunk record " + std::to_string(ordinal));
  const bool expects_aug = (st.aug.kind == AugKind::Channel && !st.aug.channels.indices.empty()) ||
                           (st.aug.kind == AugKind::Token && st.aug.tokens_per_sample > 0);
  if (expects_aug != !aug.empty())
    throw Error(ErrorKind::Decode, "chunk " + std::to_string(ordinal) + " augmentation section missing or unexpected");

  std::vector<CachedSample> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = e.first_sample + i;
    CachedSample s{id, std::move(features[i]), st.labels[id], std::nullopt, {}};
    if (!aug.empty()) s.aug_stored = std::move(aug[i]);
    if (!st.token_matches.empty()) s.token_matches = st.token_matches[id];
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::uint64_t> epoch_order(std::uint64_t sample_count, std::uint64_t chunk_size, std::uint64_t seed) {
  if (chunk_size == 0) throw Error(ErrorKind::InvalidConfig, "chunk size must be >= 1");
  const std::uint64_t chunks = (sample_count + chunk_size - 1) / chunk_size;
  std::vector<std::uint64_t> order;
  order.reserve(sample_count);
  for (auto c : seeded_permutation(chunks, seed)) {
    const std::uint64_t first = c * chunk_size;
    const std::uint64_t count = std::min(chunk_size, sample_count - first);
    for (auto local : chunk_local_order(count, seed, c)) order.push_back(first + local);
  }
  return order;
}

EpochStream::EpochStream(CacheHandle handle, std::uint64_t seed, std::size_t prefetch)
    : handle_(std::move(handle)), seed_(seed), prefetch_(prefetch) {
  for (auto c : seeded_permutation(handle_.chunk_count(), seed_)) chunk_order_.push_back(c);
}

void EpochStream::refill() {
  const std::size_t want = prefetch_ + 1;
  while (pending_.size() < want && next_chunk_ < chunk_order_.size()) {
    const std::uint64_t c = chunk_order_[next_chunk_++];
    const auto policy = prefetch_ > 0 ? std::launch::async : std::launch::deferred;
    pending_.push_back(std::async(policy, [h = handle_, c] { return h.read_chunk(c); }));
  }
}

std::optional<CachedSample> EpochStream::next() {
  while (current_pos_ >= current_order_.size()) {
    refill();
    if (pending_.empty()) return std::nullopt;
    current_ = pending_.front().get();
    pending_.pop_front();
    const std::uint64_t ordinal = handle_.index()[current_.front().index / handle_.header().chunk_size].ordinal;
    auto local = chunk_local_order(current_.size(), seed_, ordinal);
    current_order_.assign(local.begin(), local.end());
    current_pos_ = 0;
    refill();
  }
  return std::move(current_[current_order_[current_pos_++]]);
}

EpochStream shuffled_epoch_iter(const CacheHandle& handle, std::uint64_t seed, std::size_t prefetch) {
  return EpochStream(handle, seed, prefetch);
}

}  // namespace fcache
