#include "fcache/refnet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fcache/error.hpp"
#include "fcache/rng.hpp"

namespace fcache {

namespace {

ConvStage make_stage(std::size_t in, std::size_t out, Rng& rng) {
  ConvStage s;
  s.in_channels = in;
  s.out_channels = out;
  const double sigma = 1.0 / std::sqrt(static_cast<double>(in * 9));
  s.weights.resize(out * in * 9);
  for (auto& w : s.weights) w = static_cast<float>(sigma * rng.normal());
  s.bias.resize(out);
  for (auto& b : s.bias) b = static_cast<float>(0.1 * rng.normal());
  return s;
}

}  // namespace

RefNet RefNet::create(std::uint64_t seed) {
  RefNet net;
  Rng rng(seed);
  net.stages_[0] = make_stage(3, 8, rng);
  net.stages_[1] = make_stage(8, 16, rng);
  return net;
}

Tensor conv_relu_pool(const ConvStage& stage, const Tensor& input) {
  if (input.rank() != 3 || input.dim(0) != stage.in_channels)
    throw Error(ErrorKind::InvalidShape, "stage expects " + std::to_string(stage.in_channels) + "×H×W input, got " +
                                             shape_to_string(input.shape()));
  const std::size_t h = input.dim(1), w = input.dim(2);
  if (h % 2 || w % 2) throw Error(ErrorKind::InvalidShape, "H and W must be even for 2×2 pooling");
  const auto in = input.data();

  std::vector<float> conv(h * w);
  std::vector<float> out(stage.out_channels * (h / 2) * (w / 2));
  for (std::size_t o = 0; o < stage.out_channels; ++o) {
    std::fill(conv.begin(), conv.end(), stage.bias[o]);
    for (std::size_t c = 0; c < stage.in_channels; ++c) {
      const float* k = &stage.weights[(o * stage.in_channels + c) * 9];
      const float* plane = in.data() + c * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          float acc = 0.0f;
          for (int dy = -1; dy <= 1; ++dy) {
            const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (int dx = -1; dx <= 1; ++dx) {
              const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
              if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += k[(dy + 1) * 3 + (dx + 1)] * plane[yy * w + xx];
            }
          }
          conv[y * w + x] += acc;
        }
    }
    float* dst = out.data() + o * (h / 2) * (w / 2);
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t x = 0; x < w / 2; ++x) {
        const float m = std::max({conv[(2 * y) * w + 2 * x], conv[(2 * y) * w + 2 * x + 1],
                                  conv[(2 * y + 1) * w + 2 * x], conv[(2 * y + 1) * w + 2 * x + 1]});
        dst[y * (w / 2) + x] = std::max(m, 0.0f);
      }
  }
  return Tensor({stage.out_channels, h / 2, w / 2}, std::move(out));
}

Tensor RefNet::forward(const Tensor& input, std::size_t up_to_stage) const {
  if (up_to_stage < 1 || up_to_stage > kStages) throw Error(ErrorKind::InvalidConfig, "stage must be 1 or 2");
  if (input.rank() != 3) throw Error(ErrorKind::InvalidShape, "refnet input must be 3×H×W");
  const std::size_t div = std::size_t{1} << up_to_stage;
  if (input.dim(1) % div || input.dim(2) % div)
    throw Error(ErrorKind::InvalidShape, "H and W must be divisible by " + std::to_string(div));
  Tensor x = input;
  for (std::size_t s = 0; s < up_to_stage; ++s) x = conv_relu_pool(stages_[s], x);
  return x;
}

SyntheticDataset gen_synthetic_dataset(std::uint64_t seed, std::size_t n, std::size_t classes, std::size_t size) {
  if (classes == 0 || n % classes) throw Error(ErrorKind::InvalidConfig, "n must be divisible by the class count");
  if (classes > 4) throw Error(ErrorKind::InvalidConfig, "at most 4 synthetic classes");
  if (size < 4) throw Error(ErrorKind::InvalidConfig, "image size must be >= 4");

  constexpr double kNoise = 0.35;
  const double two_pi = 2.0 * std::numbers::pi;
  const double s = static_cast<double>(size);

  SyntheticDataset ds;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % classes);
    const double period = rng.uniform(5.0, 9.0);
    const double phase = rng.uniform(0.0, two_pi);
    const double blob_y = rng.uniform(0.3, 0.7) * s;
    const double blob_r = rng.uniform(0.15, 0.3) * s;
    const double ramp = rng.uniform(0.6, 1.0);
    std::array<double, 3> gain{};
    for (auto& g : gain) g = rng.uniform(0.6, 1.0);

    std::vector<float> px(3 * size * size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double fy = static_cast<double>(y), fx = static_cast<double>(x);
        double p = 0.0;
        switch (label) {
          case 0:  // horizontal stripes
            p = 0.5 + 0.5 * std::sin(two_pi * fy / period + phase);
            break;
          case 1: {  // blob centred on the vertical mirror axis
            const double dx = fx - (s - 1.0) / 2.0, dy = fy - blob_y;
            p = std::exp(-(dx * dx + dy * dy) / (2.0 * blob_r * blob_r));
            break;
          }
          case 2:  // "/" diagonal stripes
            p = 0.5 + 0.5 * std::sin(two_pi * (fx + fy) / (period * std::numbers::sqrt2) + phase);
            break;
          default:  // dark-to-bright ramp from left to right
            p = ramp * fx / (s - 1.0);
            break;
        }
        for (std::size_t c = 0; c < 3; ++c)
          px[(c * size + y) * size + x] = static_cast<float>(gain[c] * p + kNoise * rng.normal());
      }
    ds.images.emplace_back(Shape{3, size, size}, std::move(px));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace fcache
