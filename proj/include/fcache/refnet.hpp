#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fcache/tensor.hpp"

namespace fcache {

/// 3×3 convolution (stride 1, zero pad 1) + ReLU + 2×2 max-pool.
struct ConvStage {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::vector<float> weights;  // [out][in][3][3]
  std::vector<float> bias;     // [out]
};

/// Fixed-weight two-stage feature extractor standing in for the frozen part of
/// a network: 3→8 channels, then 8→16, each halving H and W. Weights are drawn
/// once from N(0, 1/fan_in), biases from N(0, 0.1^2), and never updated.
class RefNet {
 public:
  static constexpr std::size_t kStages = 2;

  static RefNet create(std::uint64_t seed);

  /// Output of the first `up_to_stage` stages (1 or 2) for a 3×H×W input.
  Tensor forward(const Tensor& input, std::size_t up_to_stage) const;

  const ConvStage& stage(std::size_t i) const { return stages_.at(i); }

 private:
  std::array<ConvStage, kStages> stages_;
};

Tensor conv_relu_pool(const ConvStage& stage, const Tensor& input);

struct SyntheticDataset {
  std::vector<Tensor> images;  // 3×size×size
  std::vector<int> labels;
};

/// Class-balanced oriented-pattern images plus seeded noise. Label i % classes
/// for sample i. Classes 0 and 1 (horizontal stripes, centred blob) look
/// the same mirrored; classes 2 and 3 (diagonal stripes, left-to-right ramp)
/// do not, and their mirror images keep the label.
SyntheticDataset gen_synthetic_dataset(std::uint64_t seed, std::size_t n, std::size_t classes = 4,
                                       std::size_t size = 32);

}  // namespace fcache
