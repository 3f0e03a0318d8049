#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fcache/tensor.hpp"

namespace fcache {

/// Single linear layer trained with per-sample SGD on softmax cross-entropy.
/// Parameters are kept in double so training is insensitive to summation
/// order noise and gradient checks are meaningful.
struct LinearProbe {
  std::size_t inputs = 0;
  std::size_t classes = 0;
  std::vector<double> weights;  // classes × inputs, row-major
  std::vector<double> bias;

  std::vector<double> logits(std::span<const float> x) const;
  /// Argmax of the logits, ties to the lowest class.
  int predict(std::span<const float> x) const;

  friend bool operator==(const LinearProbe&, const LinearProbe&) = default;
};

LinearProbe init_probe(std::size_t inputs, std::size_t classes, std::uint64_t seed);

/// Cross-entropy of one sample; fills `grad` (same layout as the probe) when
/// given.
double probe_loss(const LinearProbe& probe, std::span<const float> x, int label, LinearProbe* grad = nullptr);

void sgd_step(LinearProbe& probe, std::span<const float> x, int label, double learning_rate);

struct TrainConfig {
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

using SampleVisitor = std::function<void(std::span<const float> features, int label)>;
/// Feeds every sample of epoch `epoch` to the visitor, in training order.
using EpochSource = std::function<void(std::size_t epoch, const SampleVisitor& visit)>;

LinearProbe train_linear_probe(const EpochSource& source, std::size_t inputs, std::size_t classes,
                               const TrainConfig& config);

/// In-memory variant; epoch e visits samples in seeded_permutation(n, derive_seed(seed, e)).
LinearProbe train_linear_probe(std::span<const Tensor> features, std::span<const int> labels, std::size_t classes,
                               const TrainConfig& config);

double evaluate(const LinearProbe& probe, std::span<const Tensor> features, std::span<const int> labels);

}  // namespace fcache
