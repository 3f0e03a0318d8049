#include "fcache/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fcache/error.hpp"
#include "fcache/rng.hpp"

namespace fcache {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidShape: return "invalid-shape";
    case ErrorKind::InvalidValue: return "invalid-value";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::DegenerateVector: return "degenerate-vector";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Format: return "format";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::AugmentationUnavailable: return "augmentation-unavailable";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw Error(ErrorKind::InvalidShape, "tensor shape must not be empty");
  if (std::find(shape_.begin(), shape_.end(), std::size_t{0}) != shape_.end())
    throw Error(ErrorKind::InvalidShape, "tensor dimensions must be positive, got " + shape_to_string(shape_));
  if (shape_numel(shape_) != data_.size())
    throw Error(ErrorKind::InvalidShape, "data length " + std::to_string(data_.size()) +
                                             " does not match shape " + shape_to_string(shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      throw Error(ErrorKind::InvalidValue, "non-finite value at flat index " + std::to_string(i));
  }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0f); }

Tensor Tensor::filled(Shape shape, float value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

std::size_t Tensor::slice_size() const noexcept { return data_.size() / shape_[0]; }

std::span<const float> Tensor::slice(std::size_t i) const {
  if (i >= shape_[0]) throw Error(ErrorKind::OutOfRange, "slice index out of range");
  const auto sz = slice_size();
  return std::span<const float>(data_).subspan(i * sz, sz);
}

Tensor flip_h(const Tensor& t) {
  if (t.rank() < 2) throw Error(ErrorKind::InvalidShape, "flip_h needs rank >= 2");
  const std::size_t w = t.shape().back();
  std::vector<float> out(t.numel());
  const auto in = t.data();
  for (std::size_t row = 0; row < t.numel(); row += w) {
    std::reverse_copy(in.begin() + row, in.begin() + row + w, out.begin() + row);
  }
  return Tensor(t.shape(), std::move(out));
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::ShapeMismatch, "cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::DegenerateVector, "cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// Applies fn(plane_in, plane_out) over every trailing H×W plane.
template <typename Fn>
std::vector<float> per_plane(const Tensor& t, Fn fn) {
  const std::size_t w = t.shape().back();
  const std::size_t h = t.shape()[t.rank() - 2];
  std::vector<float> out(t.numel());
  for (std::size_t off = 0; off < t.numel(); off += h * w) {
    fn(t.data().subspan(off, h * w), std::span<float>(out).subspan(off, h * w), h, w);
  }
  return out;
}

std::vector<double> gaussian_kernel(std::size_t radius) {
  const double sigma = std::max(0.5, radius / 2.0);
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double x = double(i) - double(radius);
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace

Tensor seeded_perturb(const Tensor& t, const PerturbConfig& config, std::uint64_t seed) {
  if (!(config.noise_sigma >= 0.0) || !std::isfinite(config.noise_sigma))
    throw Error(ErrorKind::InvalidConfig, "noise sigma must be finite and >= 0");
  const bool spatial = config.blur_radius > 0 || config.crop_margin > 0;
  if (spatial && t.rank() < 2) throw Error(ErrorKind::InvalidConfig, "crop/blur need rank >= 2");
  if (config.crop_margin > 0) {
    const auto h = t.shape()[t.rank() - 2], w = t.shape().back();
    if (config.crop_margin >= std::min(h, w))
      throw Error(ErrorKind::InvalidConfig, "crop margin must be < min(H, W)");
  }

  Rng rng(seed);
  Tensor cur = t;

  if (config.crop_margin > 0) {
    const auto m = static_cast<std::ptrdiff_t>(config.crop_margin);
    const auto dy = static_cast<std::ptrdiff_t>(rng.below(2 * m + 1)) - m;
    const auto dx = static_cast<std::ptrdiff_t>(rng.below(2 * m + 1)) - m;
    auto out = per_plane(cur, [&](std::span<const float> in, std::span<float> o, std::size_t h, std::size_t w) {
      const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x)
          o[y * W + x] = in[reflect(y + dy, H) * W + reflect(x + dx, W)];
    });
    cur = Tensor(cur.shape(), std::move(out));
  }

  if (config.blur_radius > 0) {
    const auto k = gaussian_kernel(config.blur_radius);
    const auto r = static_cast<std::ptrdiff_t>(config.blur_radius);
    auto out = per_plane(cur, [&](std::span<const float> in, std::span<float> o, std::size_t h, std::size_t w) {
      const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
      std::vector<double> tmp(h * w);
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::ptrdiff_t d = -r; d <= r; ++d) acc += k[d + r] * in[y * W + reflect(x + d, W)];
          tmp[y * W + x] = acc;
        }
      for (std::ptrdiff_t y = 0; y < H; ++y)
        for (std::ptrdiff_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (std::ptrdiff_t d = -r; d <= r; ++d) acc += k[d + r] * tmp[reflect(y + d, H) * W + x];
          o[y * W + x] = static_cast<float>(acc);
        }
    });
    cur = Tensor(cur.shape(), std::move(out));
  }

  if (config.noise_sigma > 0.0) {
    std::vector<float> out(cur.values());
    for (auto& v : out) v = static_cast<float>(v + config.noise_sigma * rng.normal());
    cur = Tensor(cur.shape(), std::move(out));
  }
  return cur;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw Error(ErrorKind::ShapeMismatch, "max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace fcache
