#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "fcache/error.hpp"
#include "fcache/rng.hpp"
#include "fcache/tensor.hpp"
#include "test_support.hpp"

using namespace fcache;
using fcache::testing::expect_error;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) { return fcache::testing::uniform_tensor(std::move(shape), seed); }

double sum(const Tensor& t) {
  return std::accumulate(t.values().begin(), t.values().end(), 0.0);
}

}  // namespace

TEST(Tensor, RejectsBadConstruction) {
  expect_error(ErrorKind::InvalidShape, [] { Tensor({}, {}); });
  expect_error(ErrorKind::InvalidShape, [] { Tensor({2, 0}, {}); });
  expect_error(ErrorKind::InvalidShape, [] { Tensor({2, 2}, {1, 2, 3}); });
  expect_error(ErrorKind::InvalidValue, [] { Tensor({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}); });
  expect_error(ErrorKind::InvalidValue, [] { Tensor({1}, {std::numeric_limits<float>::infinity()}); });
}

TEST(Tensor, SliceViewsLeadingAxis) {
  Tensor t({3, 2}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.slice_size(), 2u);
  EXPECT_EQ(t.slice(1)[0], 2.0f);
  EXPECT_EQ(t.slice(2)[1], 5.0f);
}

TEST(FlipH, HandExample) {
  Tensor t({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(flip_h(t), Tensor({1, 2, 2}, {2, 1, 4, 3}));
}

TEST(FlipH, RankOneRejected) {
  expect_error(ErrorKind::InvalidShape, [] { flip_h(Tensor({4}, {1, 2, 3, 4})); });
}

TEST(FlipH, SymmetricTensorUnchanged) {
  Tensor t({2, 3}, {1, 5, 1, 7, 0, 7});
  EXPECT_EQ(flip_h(t), t);
}

TEST(FlipH, InvolutionAndSumPreservedProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(seed);
    Shape shape{1 + r.below(4), 1 + r.below(7), 1 + r.below(9)};
    auto t = random_tensor(shape, seed);
    auto f = flip_h(t);
    EXPECT_EQ(flip_h(f), t);
    EXPECT_NEAR(sum(f), sum(t), 1e-9);
    const std::size_t w = shape.back();
    for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(f[i], t[i - i % w + (w - 1 - i % w)]);
  }
}

TEST(Cosine, Examples) {
  const std::vector<float> a{1, 2, 2}, b{2, 1, 2}, e1{1, 0}, e2{0, 1};
  EXPECT_NEAR(cosine_similarity(a, b), 8.0 / 9.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
  EXPECT_EQ(cosine_similarity(e1, e2), 0.0);
}

TEST(Cosine, Errors) {
  const std::vector<float> z{0, 0}, a{1, 2}, c{1, 2, 3};
  expect_error(ErrorKind::DegenerateVector, [&] { cosine_similarity(z, a); });
  expect_error(ErrorKind::ShapeMismatch, [&] { cosine_similarity(a, c); });
}

TEST(Cosine, PositiveScaleInvarianceProperty) {
  Rng r(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> a(8), b(8), sb(8);
    const float k = static_cast<float>(r.uniform(0.25, 4.0));
    for (int i = 0; i < 8; ++i) {
      a[i] = static_cast<float>(r.uniform(-1, 1));
      b[i] = static_cast<float>(r.uniform(-1, 1));
      sb[i] = b[i] * k;
    }
    EXPECT_NEAR(cosine_similarity(a, b), cosine_similarity(a, sb), 1e-6);
  }
}

TEST(Perturb, ZeroConfigIsIdentity) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto t = random_tensor({3, 6, 5}, seed);
    EXPECT_EQ(seeded_perturb(t, {}, seed), t);
  }
}

TEST(Perturb, DeterministicAndShapePreserving) {
  auto t = random_tensor({2, 9, 11}, 1);
  PerturbConfig cfg{0.2, 2, 3};
  auto a = seeded_perturb(t, cfg, 42);
  auto b = seeded_perturb(t, cfg, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.shape(), t.shape());
  EXPECT_NE(seeded_perturb(t, cfg, 43), a);
}

TEST(Perturb, NoiseMeanWithinThreeSigma) {
  auto t = Tensor::zeros({10, 100, 100});
  auto out = seeded_perturb(t, {0.1, 0, 0}, 2024);
  const double mean = sum(out) / 1e5;
  EXPECT_LE(std::abs(mean), 3 * 0.1 / std::sqrt(1e5));
  double sq = 0;
  for (float v : out.values()) sq += double(v) * v;
  EXPECT_NEAR(std::sqrt(sq / 1e5), 0.1, 0.005);
}

TEST(Perturb, MarginOutOfRange) {
  auto t = random_tensor({1, 4, 6}, 0);
  expect_error(ErrorKind::InvalidConfig, [&] { seeded_perturb(t, {0, 0, 4}, 1); });
  EXPECT_NO_THROW(seeded_perturb(t, {0, 0, 3}, 1));
}

TEST(Perturb, BlurKeepsConstantTensor) {
  auto t = Tensor::filled({2, 8, 8}, 0.5f);
  auto out = seeded_perturb(t, {0, 3, 2}, 9);
  for (float v : out.values()) EXPECT_NEAR(v, 0.5f, 1e-6);
}

TEST(MaxAbsDiff, Basic) {
  Tensor a({3}, {1, 2, 3}), b({3}, {1, 2.5f, 2});
  EXPECT_DOUBLE_EQ(max_abs_diff(a, b), 1.0);
  expect_error(ErrorKind::ShapeMismatch, [&] { max_abs_diff(a, Tensor({1, 3}, {1, 2, 3})); });
}
