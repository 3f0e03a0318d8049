#include "fcache/probe.hpp"

#include <algorithm>
#include <cmath>

#include "fcache/error.hpp"
#include "fcache/rng.hpp"

namespace fcache {

std::vector<double> LinearProbe::logits(std::span<const float> x) const {
  if (x.size() != inputs)
    throw Error(ErrorKind::ShapeMismatch, "probe expects " + std::to_string(inputs) + " features, got " +
                                              std::to_string(x.size()));
  std::vector<double> z(bias);
  for (std::size_t k = 0; k < classes; ++k) {
    const double* w = &weights[k * inputs];
    double acc = 0.0;
    for (std::size_t i = 0; i < inputs; ++i) acc += w[i] * x[i];
    z[k] += acc;
  }
  return z;
}

int LinearProbe::predict(std::span<const float> x) const {
  const auto z = logits(x);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

LinearProbe init_probe(std::size_t inputs, std::size_t classes, std::uint64_t seed) {
  if (inputs == 0 || classes < 2) throw Error(ErrorKind::InvalidConfig, "probe needs inputs and >= 2 classes");
  LinearProbe p{inputs, classes, std::vector<double>(inputs * classes), std::vector<double>(classes, 0.0)};
  Rng rng(seed);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(inputs));
  for (auto& w : p.weights) w = sigma * rng.normal();
  return p;
}

double probe_loss(const LinearProbe& probe, std::span<const float> x, int label, LinearProbe* grad) {
  if (label < 0 || static_cast<std::size_t>(label) >= probe.classes)
    throw Error(ErrorKind::OutOfRange, "label " + std::to_string(label) + " outside [0, classes)");
  auto z = probe.logits(x);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  const double loss = -std::log(std::max(z[label], 1e-300));
  if (grad) {
    grad->inputs = probe.inputs;
    grad->classes = probe.classes;
    grad->weights.assign(probe.weights.size(), 0.0);
    grad->bias.assign(probe.classes, 0.0);
    for (std::size_t k = 0; k < probe.classes; ++k) {
      const double g = z[k] - (static_cast<int>(k) == label ? 1.0 : 0.0);
      grad->bias[k] = g;
      double* row = &grad->weights[k * probe.inputs];
      for (std::size_t i = 0; i < probe.inputs; ++i) row[i] = g * x[i];
    }
  }
  return loss;
}

void sgd_step(LinearProbe& probe, std::span<const float> x, int label, double learning_rate) {
  if (learning_rate == 0.0) return;
  if (label < 0 || static_cast<std::size_t>(label) >= probe.classes)
    throw Error(ErrorKind::OutOfRange, "label " + std::to_string(label) + " outside [0, classes)");
  auto z = probe.logits(x);
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (std::size_t k = 0; k < probe.classes; ++k) {
    const double g = z[k] / sum - (static_cast<int>(k) == label ? 1.0 : 0.0);
    probe.bias[k] -= learning_rate * g;
    double* row = &probe.weights[k * probe.inputs];
    const double step = learning_rate * g;
    for (std::size_t i = 0; i < probe.inputs; ++i) row[i] -= step * x[i];
  }
}

LinearProbe train_linear_probe(const EpochSource& source, std::size_t inputs, std::size_t classes,
                               const TrainConfig& config) {
  LinearProbe probe = init_probe(inputs, classes, config.seed);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    source(e, [&](std::span<const float> x, int label) { sgd_step(probe, x, label, config.learning_rate); });
  }
  return probe;
}

LinearProbe train_linear_probe(std::span<const Tensor> features, std::span<const int> labels, std::size_t classes,
                               const TrainConfig& config) {
  if (features.size() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "feature and label counts differ");
  if (features.empty()) throw Error(ErrorKind::InvalidConfig, "no training samples");
  const std::size_t inputs = features.front().numel();
  for (const auto& f : features)
    if (f.numel() != inputs) throw Error(ErrorKind::ShapeMismatch, "feature sizes differ between samples");
  return train_linear_probe(
      [&](std::size_t epoch, const SampleVisitor& visit) {
        for (auto i : seeded_permutation(features.size(), derive_seed(config.seed, epoch)))
          visit(features[i].data(), labels[i]);
      },
      inputs, classes, config);
}

double evaluate(const LinearProbe& probe, std::span<const Tensor> features, std::span<const int> labels) {
  if (features.empty()) throw Error(ErrorKind::InvalidConfig, "evaluate needs at least one sample");
  if (features.size() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "feature and label counts differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (probe.predict(features[i].data()) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

}  // namespace fcache
