#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fcache/tensor.hpp"

namespace fcache {

/// Which channels keep a stored copy of their flipped-input activation.
/// `indices` holds round(gamma * channel_count) ids, strictly increasing.
struct ChannelSelection {
  double gamma = 0.0;
  std::uint32_t channel_count = 0;
  std::vector<std::uint32_t> indices;

  friend bool operator==(const ChannelSelection&, const ChannelSelection&) = default;
};

/// round(fraction * count) with halves rounded away from zero.
std::size_t selection_size(double fraction, std::size_t count);

/// Global (single-window) SSIM over two equally shaped channels. Constants
/// are C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L the joint dynamic range of the
/// pair; identical constant channels (L = 0) score 1.
double ssim(std::span<const float> a, std::span<const float> b);

/// score[i] = ssim(flipped_input_features[i], flip_h(original_features)[i]).
std::vector<double> score_channels(const Tensor& original_features, const Tensor& flipped_input_features);

/// Lowest-score channels; ties go to the lower channel index.
ChannelSelection select_sensitive_channels(std::span<const double> scores, double gamma);

/// Per-channel scores averaged over a seeded subset of at most `subset_size`
/// samples, summed in ascending sample order.
std::vector<double> dataset_channel_scores(std::span<const Tensor> original_features,
                                           std::span<const Tensor> flipped_input_features, std::uint64_t seed,
                                           std::size_t subset_size = 256);

/// Averages per-channel scores over a seeded subset of at most `subset_size`
/// samples (summed in ascending sample order) and selects from the mean.
ChannelSelection select_channels_for_dataset(std::span<const Tensor> original_features,
                                             std::span<const Tensor> flipped_input_features, double gamma,
                                             std::uint64_t seed, std::size_t subset_size = 256);

/// Stack of the selected channels of `flipped_input_features` (x×H×W), the
/// per-sample payload kept next to the original activation. Empty selection
/// yields nullopt since a zero-channel tensor cannot exist.
std::optional<Tensor> gather_channels(const Tensor& flipped_input_features, std::span<const std::uint32_t> indices);

/// flip_h(features) with the selected channels overwritten by `stored`.
Tensor apply_flip_augmentation(const Tensor& features, std::span<const std::uint32_t> indices,
                               const std::optional<Tensor>& stored);

}  // namespace fcache
