#include "fcache/codec.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "fcache/bytes.hpp"
#include "fcache/error.hpp"

namespace fcache {

namespace {

constexpr std::string_view kChunkMagic = "AFC1";
constexpr std::uint8_t kModeRaw = 0;
constexpr std::uint8_t kModeQuantized = 1;
constexpr std::array<std::uint8_t, 2> kSentinel = {0xFE, 0xED};
constexpr std::size_t kMaxRank = 16;
// Quantization indices are kept well inside int64 so the lifting steps
// cannot overflow.
constexpr double kMaxQuantIndex = 0x1.0p40;

struct Geometry {
  std::size_t k = 0;       // samples in the chunk
  std::size_t planes = 0;  // product of all but the last two sample axes
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t hp = 0;  // h, w padded to a multiple of the block edge
  std::size_t wp = 0;

  std::size_t sample_numel() const { return planes * h * w; }
  std::size_t numel() const { return k * sample_numel(); }
  std::size_t blocks_per_plane() const { return (hp / 4) * (wp / 4); }
  std::size_t block_count() const { return k * planes * blocks_per_plane(); }
  std::size_t coeff_count(Transform t) const { return t == Transform::None ? numel() : block_count() * 16; }
};

Geometry make_geometry(const Shape& shape, std::size_t k) {
  Geometry g;
  g.k = k;
  g.w = shape.back();
  g.h = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
  g.planes = 1;
  for (std::size_t i = 0; i + 2 < shape.size(); ++i) g.planes *= shape[i];
  constexpr auto e = CodecParams::kBlockEdge;
  g.hp = (g.h + e - 1) / e * e;
  g.wp = (g.w + e - 1) / e * e;
  return g;
}

void validate_params(const CodecParams& p) {
  if (!std::isfinite(p.tolerance) || p.tolerance < 0.0)
    throw Error(ErrorKind::InvalidConfig, "tolerance must be finite and >= 0");
  if (p.transform != Transform::None && p.transform != Transform::BlockDecorrelate)
    throw Error(ErrorKind::InvalidConfig, "unknown transform id");
}

inline std::uint64_t zigzag(std::int64_t v) { return (std::uint64_t(v) << 1) ^ std::uint64_t(v >> 63); }
inline std::int64_t unzigzag(std::uint64_t u) { return std::int64_t(u >> 1) ^ -std::int64_t(u & 1); }

// S-transform lifting pair; exactly invertible in integer arithmetic.
inline void lift(std::int64_t& a, std::int64_t& b) {
  const std::int64_t d = a - b;
  const std::int64_t s = b + (d >> 1);
  a = s;
  b = d;
}
inline void unlift(std::int64_t& s, std::int64_t& d) {
  const std::int64_t b = s - (d >> 1);
  const std::int64_t a = b + d;
  s = a;
  d = b;
}

// Pairing schedule of the multi-level lifting across samples. After a pair
// (a, b) is lifted, slot a holds the approximation and slot b the detail.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t k) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> active(k);
  for (std::size_t i = 0; i < k; ++i) active[i] = i;
  while (active.size() > 1) {
    std::vector<std::size_t> next;
    std::size_t i = 0;
    for (; i + 1 < active.size(); i += 2) {
      pairs.emplace_back(active[i], active[i + 1]);
      next.push_back(active[i]);
    }
    if (i < active.size()) next.push_back(active[i]);
    active = std::move(next);
  }
  return pairs;
}

void sample_lift_forward(std::vector<std::int64_t>& q, const Geometry& g) {
  const auto m = g.sample_numel();
  for (auto [a, b] : sample_pairs(g.k)) {
    std::int64_t* pa = q.data() + a * m;
    std::int64_t* pb = q.data() + b * m;
    for (std::size_t i = 0; i < m; ++i) lift(pa[i], pb[i]);
  }
}

void sample_lift_inverse(std::vector<std::int64_t>& q, const Geometry& g) {
  const auto m = g.sample_numel();
  const auto pairs = sample_pairs(g.k);
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) {
    std::int64_t* pa = q.data() + it->first * m;
    std::int64_t* pb = q.data() + it->second * m;
    for (std::size_t i = 0; i < m; ++i) unlift(pa[i], pb[i]);
  }
}

// Two-level 2D Haar on a row-major 4×4 block. Output order: coarse LL, the
// three level-2 details, then the three level-1 details of each 2×2 quadrant.
void block_forward(const std::array<std::int64_t, 16>& in, std::array<std::int64_t, 16>& out) {
  std::array<std::int64_t, 4> ll{};
  for (int qi = 0; qi < 2; ++qi)
    for (int qj = 0; qj < 2; ++qj) {
      std::int64_t a = in[(2 * qi) * 4 + 2 * qj], b = in[(2 * qi) * 4 + 2 * qj + 1];
      std::int64_t c = in[(2 * qi + 1) * 4 + 2 * qj], d = in[(2 * qi + 1) * 4 + 2 * qj + 1];
      lift(a, b);  // a: row-0 mean, b: row-0 diff
      lift(c, d);
      lift(a, c);  // a: LL, c: vertical detail
      lift(b, d);  // b: horizontal detail, d: diagonal
      const int quad = qi * 2 + qj;
      ll[quad] = a;
      out[4 + quad * 3 + 0] = c;
      out[4 + quad * 3 + 1] = b;
      out[4 + quad * 3 + 2] = d;
    }
  lift(ll[0], ll[1]);
  lift(ll[2], ll[3]);
  lift(ll[0], ll[2]);
  lift(ll[1], ll[3]);
  out[0] = ll[0];
  out[1] = ll[2];
  out[2] = ll[1];
  out[3] = ll[3];
}

void block_inverse(const std::array<std::int64_t, 16>& in, std::array<std::int64_t, 16>& out) {
  std::array<std::int64_t, 4> ll = {in[0], in[2], in[1], in[3]};
  unlift(ll[1], ll[3]);
  unlift(ll[0], ll[2]);
  unlift(ll[2], ll[3]);
  unlift(ll[0], ll[1]);
  for (int qi = 0; qi < 2; ++qi)
    for (int qj = 0; qj < 2; ++qj) {
      const int quad = qi * 2 + qj;
      std::int64_t a = ll[quad];
      std::int64_t c = in[4 + quad * 3 + 0];
      std::int64_t b = in[4 + quad * 3 + 1];
      std::int64_t d = in[4 + quad * 3 + 2];
      unlift(b, d);
      unlift(a, c);
      unlift(c, d);
      unlift(a, b);
      out[(2 * qi) * 4 + 2 * qj] = a;
      out[(2 * qi) * 4 + 2 * qj + 1] = b;
      out[(2 * qi + 1) * 4 + 2 * qj] = c;
      out[(2 * qi + 1) * 4 + 2 * qj + 1] = d;
    }
}

// Coefficients are laid out band-major (all coarse coefficients of every
// block, then band 1, ...) so the mostly-zero detail bands form long runs.
// The coarse band is delta coded along the block sequence.
std::vector<std::int64_t> spatial_forward(const std::vector<std::int64_t>& q, const Geometry& g) {
  const std::size_t nblocks = g.block_count();
  std::vector<std::int64_t> coeffs(nblocks * 16);
  std::array<std::int64_t, 16> blk{}, out{};
  std::size_t b = 0;
  for (std::size_t plane = 0; plane < g.k * g.planes; ++plane) {
    const std::int64_t* src = q.data() + plane * g.h * g.w;
    for (std::size_t by = 0; by < g.hp; by += 4)
      for (std::size_t bx = 0; bx < g.wp; bx += 4, ++b) {
        for (std::size_t y = 0; y < 4; ++y) {
          const std::size_t sy = std::min(by + y, g.h - 1);
          for (std::size_t x = 0; x < 4; ++x) {
            const std::size_t sx = std::min(bx + x, g.w - 1);
            blk[y * 4 + x] = src[sy * g.w + sx];
          }
        }
        block_forward(blk, out);
        for (std::size_t c = 0; c < 16; ++c) coeffs[c * nblocks + b] = out[c];
      }
  }
  for (std::size_t i = nblocks; i-- > 1;) coeffs[i] -= coeffs[i - 1];
  return coeffs;
}

std::vector<std::int64_t> spatial_inverse(std::vector<std::int64_t> coeffs, const Geometry& g) {
  const std::size_t nblocks = g.block_count();
  for (std::size_t i = 1; i < nblocks; ++i) coeffs[i] += coeffs[i - 1];
  std::vector<std::int64_t> q(g.numel());
  std::array<std::int64_t, 16> blk{}, out{};
  std::size_t b = 0;
  for (std::size_t plane = 0; plane < g.k * g.planes; ++plane) {
    std::int64_t* dst = q.data() + plane * g.h * g.w;
    for (std::size_t by = 0; by < g.hp; by += 4)
      for (std::size_t bx = 0; bx < g.wp; bx += 4, ++b) {
        for (std::size_t c = 0; c < 16; ++c) blk[c] = coeffs[c * nblocks + b];
        block_inverse(blk, out);
        for (std::size_t y = 0; y < 4 && by + y < g.h; ++y)
          for (std::size_t x = 0; x < 4 && bx + x < g.w; ++x) dst[(by + y) * g.w + bx + x] = out[y * 4 + x];
      }
  }
  return q;
}

// Token 0 is a lone zero, token 1 starts a run of two or more zeros (followed
// by the run length minus two), any other value v becomes zigzag(v) + 1.
void pack_rle(ByteWriter& out, std::span<const std::int64_t> values) {
  std::size_t i = 0;
  while (i < values.size()) {
    if (values[i] == 0) {
      std::size_t j = i;
      while (j < values.size() && values[j] == 0) ++j;
      if (j - i == 1) {
        out.varint(0);
      } else {
        out.varint(1);
        out.varint(j - i - 2);
      }
      i = j;
    } else {
      out.varint(zigzag(values[i]) + 1);
      ++i;
    }
  }
}

std::vector<std::int64_t> unpack_rle(ByteReader& in, std::size_t count) {
  std::vector<std::int64_t> values;
  values.reserve(count);
  while (values.size() < count) {
    const std::uint64_t t = in.varint();
    if (t == 0) {
      values.push_back(0);
    } else if (t == 1) {
      const std::uint64_t extra = in.varint();
      if (extra > count - values.size() || extra + 2 > count - values.size())
        throw Error(ErrorKind::Decode, "zero run exceeds coefficient count");
      values.resize(values.size() + extra + 2, 0);
    } else {
      values.push_back(unzigzag(t - 1));
    }
  }
  return values;
}

inline float dequantize(std::int64_t q, double step) { return static_cast<float>(static_cast<double>(q) * step); }

std::vector<std::uint8_t> raw_payload(std::span<const Tensor> samples) {
  ByteWriter w;
  w.u8(kModeRaw);
  for (const auto& s : samples) {
    w.bytes({reinterpret_cast<const std::uint8_t*>(s.data().data()), s.numel() * sizeof(float)});
  }
  w.bytes(kSentinel);
  return w.take();
}

std::vector<std::uint8_t> quantized_payload(std::span<const Tensor> samples, const CodecParams& params,
                                            const Geometry& g) {
  const double tau = params.tolerance;
  const double step = 2.0 * tau;
  std::vector<std::int64_t> q(g.numel());
  std::vector<std::pair<std::size_t, float>> outliers;

  std::size_t flat = 0;
  for (const auto& s : samples) {
    for (float x : s.data()) {
      const double r = static_cast<double>(x) / step;
      std::int64_t qi = 0;
      bool ok = std::abs(r) < kMaxQuantIndex;
      if (ok) {
        qi = std::llround(r);
        ok = std::abs(static_cast<double>(dequantize(qi, step)) - static_cast<double>(x)) <= tau;
      }
      q[flat] = qi;
      if (!ok) outliers.emplace_back(flat, x);
      ++flat;
    }
  }

  std::vector<std::int64_t> coeffs;
  if (params.transform == Transform::BlockDecorrelate) {
    sample_lift_forward(q, g);
    coeffs = spatial_forward(q, g);
  } else {
    coeffs = std::move(q);
  }

  ByteWriter w;
  w.u8(kModeQuantized);
  w.varint(outliers.size());
  std::size_t prev = 0;
  for (auto [idx, value] : outliers) {
    w.varint(idx - prev);
    w.f32(value);
    prev = idx;
  }
  w.varint(coeffs.size());
  pack_rle(w, coeffs);
  w.bytes(kSentinel);
  return w.take();
}

void expect_sentinel(ByteReader& r) {
  auto s = r.bytes(kSentinel.size());
  if (s[0] != kSentinel[0] || s[1] != kSentinel[1]) throw Error(ErrorKind::Decode, "payload sentinel mismatch");
  if (r.remaining() != 0) throw Error(ErrorKind::Decode, "trailing bytes after payload sentinel");
}

}  // namespace

std::size_t chunk_overhead_bytes(std::size_t rank) noexcept {
  return kChunkMagic.size() + 1 + 8 + 4 + 4 + 4 * rank + 8 + 8 + 4;
}

EncodedChunk encode(std::span<const Tensor> samples, const CodecParams& params) {
  validate_params(params);
  if (samples.empty()) throw Error(ErrorKind::InvalidShape, "encode needs at least one sample");
  const Shape& shape = samples.front().shape();
  if (shape.size() > kMaxRank) throw Error(ErrorKind::InvalidShape, "rank exceeds codec limit");
  for (const auto& s : samples) {
    if (s.shape() != shape)
      throw Error(ErrorKind::ShapeMismatch,
                  "chunk samples differ in shape: " + shape_to_string(shape) + " vs " + shape_to_string(s.shape()));
  }
  const Geometry g = make_geometry(shape, samples.size());

  EncodedChunk chunk;
  chunk.params = params;
  chunk.sample_shape = shape;
  chunk.sample_count = static_cast<std::uint32_t>(samples.size());
  chunk.raw_bytes = g.numel() * sizeof(float);
  chunk.payload = raw_payload(samples);
  if (params.tolerance > 0.0) {
    auto lossy = quantized_payload(samples, params, g);
    if (lossy.size() < chunk.payload.size()) chunk.payload = std::move(lossy);
  }
  chunk.encoded_bytes = chunk.payload.size() + chunk_overhead_bytes(shape.size());
  return chunk;
}

std::vector<Tensor> decode(const EncodedChunk& chunk) {
  validate_params(chunk.params);
  if (chunk.sample_count == 0 || chunk.sample_shape.empty() || chunk.sample_shape.size() > kMaxRank)
    throw Error(ErrorKind::Decode, "chunk metadata describes no samples");
  for (auto d : chunk.sample_shape)
    if (d == 0) throw Error(ErrorKind::Decode, "chunk metadata has a zero dimension");
  const Geometry g = make_geometry(chunk.sample_shape, chunk.sample_count);
  if (chunk.raw_bytes != g.numel() * sizeof(float)) throw Error(ErrorKind::Decode, "raw size disagrees with shape");

  ByteReader r(chunk.payload, ErrorKind::Decode);
  const std::uint8_t mode = r.u8();
  std::vector<float> values(g.numel());

  if (mode == kModeRaw) {
    auto raw = r.bytes(values.size() * sizeof(float));
    std::memcpy(values.data(), raw.data(), raw.size());
  } else if (mode == kModeQuantized) {
    if (chunk.params.tolerance <= 0.0) throw Error(ErrorKind::Decode, "quantized payload with zero tolerance");
    const std::uint64_t n_outliers = r.varint();
    if (n_outliers > values.size()) throw Error(ErrorKind::Decode, "outlier count exceeds element count");
    std::vector<std::pair<std::size_t, float>> outliers;
    outliers.reserve(n_outliers);
    std::uint64_t idx = 0;
    for (std::uint64_t i = 0; i < n_outliers; ++i) {
      idx += r.varint();
      if (idx >= values.size()) throw Error(ErrorKind::Decode, "outlier index out of range");
      outliers.emplace_back(idx, r.f32());
    }
    const std::uint64_t n_coeffs = r.varint();
    if (n_coeffs != g.coeff_count(chunk.params.transform))
      throw Error(ErrorKind::Decode, "coefficient count disagrees with chunk shape");
    auto coeffs = unpack_rle(r, n_coeffs);
    std::vector<std::int64_t> q;
    if (chunk.params.transform == Transform::BlockDecorrelate) {
      q = spatial_inverse(std::move(coeffs), g);
      sample_lift_inverse(q, g);
    } else {
      q = std::move(coeffs);
    }
    const double step = 2.0 * chunk.params.tolerance;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::abs(static_cast<double>(q[i])) > 0x1.0p52) throw Error(ErrorKind::Decode, "quantization index out of range");
      values[i] = dequantize(q[i], step);
    }
    for (auto [i, v] : outliers) values[i] = v;
  } else {
    throw Error(ErrorKind::Decode, "unknown payload mode " + std::to_string(mode));
  }
  expect_sentinel(r);

  std::vector<Tensor> out;
  out.reserve(g.k);
  const auto m = g.sample_numel();
  for (std::size_t s = 0; s < g.k; ++s) {
    try {
      out.emplace_back(chunk.sample_shape, std::vector<float>(values.begin() + s * m, values.begin() + (s + 1) * m));
    } catch (const Error& e) {
      throw Error(ErrorKind::Decode, std::string("decoded sample invalid: ") + e.what());
    }
  }
  return out;
}

double compression_ratio(const EncodedChunk& chunk) noexcept {
  if (chunk.raw_bytes == 0) return 0.0;
  return static_cast<double>(chunk.encoded_bytes) / static_cast<double>(chunk.raw_bytes);
}

std::vector<std::uint8_t> serialize_chunk(const EncodedChunk& chunk) {
  ByteWriter w;
  w.tag(kChunkMagic);
  w.u8(static_cast<std::uint8_t>(chunk.params.transform));
  w.f64(chunk.params.tolerance);
  w.u32(chunk.sample_count);
  w.u32(static_cast<std::uint32_t>(chunk.sample_shape.size()));
  for (auto d : chunk.sample_shape) w.u32(static_cast<std::uint32_t>(d));
  w.u64(chunk.raw_bytes);
  w.u64(chunk.payload.size());
  w.bytes(chunk.payload);
  w.u32(crc32(chunk.payload));
  return w.take();
}

EncodedChunk parse_chunk(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  ByteReader r(bytes, ErrorKind::Decode);
  if (!r.tag(kChunkMagic)) throw Error(ErrorKind::Decode, "bad chunk magic");
  EncodedChunk c;
  const std::uint8_t transform = r.u8();
  if (transform > static_cast<std::uint8_t>(Transform::BlockDecorrelate))
    throw Error(ErrorKind::Decode, "unknown transform id " + std::to_string(transform));
  c.params.transform = static_cast<Transform>(transform);
  c.params.tolerance = r.f64();
  if (!std::isfinite(c.params.tolerance) || c.params.tolerance < 0.0) throw Error(ErrorKind::Decode, "invalid tolerance");
  c.sample_count = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > kMaxRank) throw Error(ErrorKind::Decode, "invalid rank " + std::to_string(rank));
  c.sample_shape.resize(rank);
  for (auto& d : c.sample_shape) d = r.u32();
  c.raw_bytes = r.u64();
  const std::uint64_t payload_size = r.u64();
  if (payload_size > r.remaining()) throw Error(ErrorKind::Decode, "chunk payload truncated");
  auto payload = r.bytes(payload_size);
  const std::uint32_t stored_crc = r.u32();
  if (crc32(payload) != stored_crc) throw Error(ErrorKind::Corruption, "chunk payload CRC mismatch");
  c.payload.assign(payload.begin(), payload.end());
  c.encoded_bytes = c.payload.size() + chunk_overhead_bytes(rank);
  if (consumed) *consumed = r.position();
  return c;
}

}  // namespace fcache
