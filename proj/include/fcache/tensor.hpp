#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fcache {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 tensor. Shapes are never empty, every dimension is
/// positive, and every value is finite; the constructor enforces all three.
/// CNN activations use C×H×W, token activations N×D.
class Tensor {
 public:
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, float value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float operator[](std::size_t flat) const { return data_[flat]; }

  /// Contiguous view of the leading-axis slice `i` (a channel of C×H×W, a row
  /// of N×D).
  std::span<const float> slice(std::size_t i) const;
  std::size_t slice_size() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Mirror along the last (width) axis.
Tensor flip_h(const Tensor& t);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct PerturbConfig {
  double noise_sigma = 0.0;
  std::size_t blur_radius = 0;
  std::size_t crop_margin = 0;
};

/// Seeded crop (shift with reflection pad-back), Gaussian blur, then additive
/// Gaussian noise, all over the last two axes. Shape is preserved.
Tensor seeded_perturb(const Tensor& t, const PerturbConfig& config, std::uint64_t seed);

/// Largest elementwise |a - b|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace fcache
