#include "fcache/channel_aug.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcache/error.hpp"
#include "fcache/rng.hpp"

namespace fcache {

std::size_t selection_size(double fraction, std::size_t count) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorKind::InvalidConfig, "fraction must lie in [0, 1]");
  return static_cast<std::size_t>(std::round(fraction * static_cast<double>(count)));
}

double ssim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::ShapeMismatch, "ssim: channel sizes differ");
  if (a.size() < 2) throw Error(ErrorKind::InvalidShape, "ssim needs at least two elements");
  const double n = static_cast<double>(a.size());

  double lo = a[0], hi = a[0], mu_a = 0.0, mu_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lo = std::min({lo, double(a[i]), double(b[i])});
    hi = std::max({hi, double(a[i]), double(b[i])});
    mu_a += a[i];
    mu_b += b[i];
  }
  const double range = hi - lo;
  if (range == 0.0) return 1.0;
  mu_a /= n;
  mu_b /= n;

  double var_a = 0.0, var_b = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mu_a, db = b[i] - mu_b;
    var_a += da * da;
    var_b += db * db;
    cov += da * db;
  }
  var_a /= n;
  var_b /= n;
  cov /= n;

  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

std::vector<double> score_channels(const Tensor& original_features, const Tensor& flipped_input_features) {
  if (original_features.shape() != flipped_input_features.shape())
    throw Error(ErrorKind::ShapeMismatch, "score_channels: feature shapes differ");
  if (original_features.rank() != 3) throw Error(ErrorKind::InvalidShape, "score_channels expects C×H×W");
  const Tensor flipped = flip_h(original_features);
  std::vector<double> scores(original_features.dim(0));
  for (std::size_t c = 0; c < scores.size(); ++c) scores[c] = ssim(flipped_input_features.slice(c), flipped.slice(c));
  return scores;
}

ChannelSelection select_sensitive_channels(std::span<const double> scores, double gamma) {
  const std::size_t x = selection_size(gamma, scores.size());
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t l, std::uint32_t r) { return scores[l] < scores[r]; });
  order.resize(x);
  std::sort(order.begin(), order.end());
  return ChannelSelection{gamma, static_cast<std::uint32_t>(scores.size()), std::move(order)};
}

std::vector<double> dataset_channel_scores(std::span<const Tensor> original_features,
                                           std::span<const Tensor> flipped_input_features, std::uint64_t seed,
                                           std::size_t subset_size) {
  if (original_features.size() != flipped_input_features.size())
    throw Error(ErrorKind::ShapeMismatch, "original and flipped-input feature counts differ");
  if (original_features.empty() || subset_size == 0)
    throw Error(ErrorKind::InvalidConfig, "channel scoring needs at least one sample");
  auto subset = seeded_permutation(original_features.size(), seed);
  subset.resize(std::min(subset_size, subset.size()));
  std::sort(subset.begin(), subset.end());

  std::vector<double> mean;
  for (auto i : subset) {
    const auto s = score_channels(original_features[i], flipped_input_features[i]);
    if (mean.empty()) mean.assign(s.size(), 0.0);
    if (s.size() != mean.size()) throw Error(ErrorKind::ShapeMismatch, "channel counts differ between samples");
    for (std::size_t c = 0; c < s.size(); ++c) mean[c] += s[c];
  }
  for (auto& m : mean) m /= static_cast<double>(subset.size());
  return mean;
}

ChannelSelection select_channels_for_dataset(std::span<const Tensor> original_features,
                                             std::span<const Tensor> flipped_input_features, double gamma,
                                             std::uint64_t seed, std::size_t subset_size) {
  return select_sensitive_channels(dataset_channel_scores(original_features, flipped_input_features, seed, subset_size),
                                   gamma);
}

std::optional<Tensor> gather_channels(const Tensor& flipped_input_features, std::span<const std::uint32_t> indices) {
  if (indices.empty()) return std::nullopt;
  if (flipped_input_features.rank() != 3) throw Error(ErrorKind::InvalidShape, "gather_channels expects C×H×W");
  const auto plane = flipped_input_features.slice_size();
  std::vector<float> out;
  out.reserve(indices.size() * plane);
  for (auto c : indices) {
    auto s = flipped_input_features.slice(c);
    out.insert(out.end(), s.begin(), s.end());
  }
  return Tensor({indices.size(), flipped_input_features.dim(1), flipped_input_features.dim(2)}, std::move(out));
}

Tensor apply_flip_augmentation(const Tensor& features, std::span<const std::uint32_t> indices,
                               const std::optional<Tensor>& stored) {
  if (features.rank() != 3) throw Error(ErrorKind::InvalidShape, "apply_flip_augmentation expects C×H×W");
  Tensor flipped = flip_h(features);
  if (indices.empty()) return flipped;
  if (!stored) throw Error(ErrorKind::AugmentationUnavailable, "selected channels have no stored payload");
  if (stored->shape() != Shape{indices.size(), features.dim(1), features.dim(2)})
    throw Error(ErrorKind::ShapeMismatch, "stored channel tensor " + shape_to_string(stored->shape()) +
                                              " does not match the selection");
  std::vector<float> out = flipped.values();
  const auto plane = features.slice_size();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= features.dim(0)) throw Error(ErrorKind::OutOfRange, "selected channel index out of range");
    auto src = stored->slice(r);
    std::copy(src.begin(), src.end(), out.begin() + indices[r] * plane);
  }
  return Tensor(features.shape(), std::move(out));
}

}  // namespace fcache
