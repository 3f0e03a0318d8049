#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fcache/refnet.hpp"
#include "fcache/rng.hpp"
#include "fcache/tensor.hpp"

// Seeded data generators shared by the unit tests and the acceptance suite.
namespace fcache::testing {

inline Tensor uniform_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(std::move(shape), std::move(v));
}

/// Smooth, ReLU-sparse C×H×W map: a few low-frequency waves per channel,
/// clipped at zero.
inline Tensor smooth_tensor(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double fx = rng.uniform(0.05, 0.3), fy = rng.uniform(0.05, 0.3), ph = rng.uniform(0, 6.28);
    const double amp = rng.uniform(0.5, 2.0), off = rng.uniform(-0.5, 0.5);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double val = off + amp * std::sin(fx * double(x) + fy * double(y) + ph);
        v[(ch * h + y) * w + x] = static_cast<float>(std::max(0.0, val));
      }
  }
  return Tensor({c, h, w}, std::move(v));
}

/// `count` small perturbations of one smooth base tensor.
inline std::vector<Tensor> correlated_samples(std::size_t count, std::size_t c, std::size_t h, std::size_t w,
                                              std::uint64_t seed, double noise = 0.002) {
  const Tensor base = smooth_tensor(c, h, w, seed);
  std::vector<Tensor> out;
  Rng rng(derive_seed(seed, 99));
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> v(base.values());
    for (auto& x : v)
      if (x > 0) x = static_cast<float>(std::max(0.0, x + noise * rng.normal()));
    out.emplace_back(base.shape(), std::move(v));
  }
  return out;
}

/// One conv stage over a 1×size×size random image whose 8 kernels are
/// mirror-symmetric except at `asymmetric` (horizontal gradients). Returns the
/// features of the image and of its mirror image.
inline std::pair<Tensor, Tensor> mirror_stack(std::uint64_t seed, const std::vector<std::uint32_t>& asymmetric,
                                              std::size_t size = 16) {
  Rng rng(seed);
  ConvStage stage;
  stage.in_channels = 1;
  stage.out_channels = 8;
  stage.bias.assign(8, 0.05f);
  for (std::size_t o = 0; o < 8; ++o) {
    const bool asym = std::find(asymmetric.begin(), asymmetric.end(), o) != asymmetric.end();
    float k[9];
    for (int row = 0; row < 3; ++row) {
      const auto a = static_cast<float>(rng.uniform(0.2, 1.0)), b = static_cast<float>(rng.uniform(-0.5, 0.5));
      if (asym) {
        k[row * 3] = -a, k[row * 3 + 1] = 0.0f, k[row * 3 + 2] = a;
      } else {
        k[row * 3] = a, k[row * 3 + 1] = b, k[row * 3 + 2] = a;
      }
    }
    stage.weights.insert(stage.weights.end(), k, k + 9);
  }
  Tensor image = uniform_tensor({1, size, size}, derive_seed(seed, 1), 0.0, 1.0);
  return {conv_relu_pool(stage, image), conv_relu_pool(stage, flip_h(image))};
}

}  // namespace fcache::testing
