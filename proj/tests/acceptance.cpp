// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are pinned here, not taken from the command line.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "fcache/cache_store.hpp"
#include "fcache/channel_aug.hpp"
#include "fcache/codec.hpp"
#include "fcache/pipeline.hpp"
#include "fcache/policy.hpp"
#include "fcache/probe.hpp"
#include "fcache/refnet.hpp"
#include "fcache/rng.hpp"
#include "fcache/token_aug.hpp"
#include "fixtures.hpp"

using namespace fcache;
using fcache::testing::correlated_samples;
using fcache::testing::mirror_stack;
using fcache::testing::uniform_tensor;

namespace {

constexpr double kErrorBoundBudgetSeconds = 60.0;
constexpr double kEndToEndBudgetSeconds = 300.0;
constexpr double kExpansionTarget = 21.33, kExpansionTolerance = 0.05;
constexpr double kAccuracyGapLimit = 0.01;
constexpr double kGradientRelErrorLimit = 1e-4;
constexpr double kDepthPassFraction = 0.8;

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Mixed-distribution tensor for the error-bound fuzz: uniform, wide-range
// normal, sparse ReLU-like, heavy-tailed, or near-constant.
Tensor fuzz_tensor(std::uint64_t seed) {
  Rng r(seed);
  Shape shape;
  if (seed % 50 == 0) {
    shape = {256, 56, 56};
  } else {
    const std::size_t rank = 1 + r.below(4);
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(1 + r.below(rank == 1 ? 4000 : 40));
  }
  std::vector<float> v(shape_numel(shape));
  const double scale = std::pow(10.0, r.uniform(-4, 4));
  const auto kind = r.below(5);
  for (auto& x : v) {
    double y = 0;
    switch (kind) {
      case 0: y = r.uniform(-1, 1); break;
      case 1: y = r.normal(); break;
      case 2: y = std::max(0.0, r.normal() - 0.5); break;
      case 3: y = std::tan(1.5 * r.uniform(-1, 1)); break;
      default: y = 1.0 + 1e-6 * r.normal(); break;
    }
    x = static_cast<float>(y * scale);
  }
  return Tensor(std::move(shape), std::move(v));
}

Outcome error_bound() {
  const auto t0 = Clock::now();
  std::size_t checked = 0, ok = 0;
  double worst_ratio = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const std::vector<Tensor> x{fuzz_tensor(seed)};
    for (double tau : {1e-1, 1e-2, 1e-3}) {
      const auto back = decode(encode(x, {tau}));
      const double err = max_abs_diff(x[0], back[0]);
      worst_ratio = std::max(worst_ratio, err / tau);
      ok += err <= tau;
      ++checked;
    }
  }
  const double s = seconds_since(t0);
  return {ok == checked && s < kErrorBoundBudgetSeconds,
          fmt("%zu/%zu (tensor,tau) pairs within tau, worst err/tau=%.4f, %.1fs (limit %.0fs)", ok, checked,
              worst_ratio, s, kErrorBoundBudgetSeconds)};
}

Outcome lossless() {
  const std::vector<float> specials{0.0f,
                                    -0.0f,
                                    std::numeric_limits<float>::denorm_min(),
                                    -std::numeric_limits<float>::denorm_min(),
                                    std::numeric_limits<float>::min() / 3.0f,
                                    std::numeric_limits<float>::min(),
                                    std::numeric_limits<float>::max(),
                                    std::numeric_limits<float>::lowest()};
  std::size_t ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng r(seed);
    const Shape shape{1 + r.below(6), 1 + r.below(17), 1 + r.below(17)};
    std::vector<float> v(shape_numel(shape));
    for (auto& x : v) {
      switch (r.below(4)) {
        case 0: x = specials[r.below(specials.size())]; break;
        case 1: x = std::ldexp(r.below(2) ? 1.0f : -1.0f, static_cast<int>(r.below(250)) - 140); break;
        case 2: {  // random subnormal bit pattern
          const std::uint32_t bits = static_cast<std::uint32_t>(r.below(0x007FFFFF) + 1) | (r.below(2) << 31);
          std::memcpy(&x, &bits, 4);
          break;
        }
        default: x = static_cast<float>(r.normal() * 100); break;
      }
    }
    const std::vector<Tensor> in{Tensor(shape, v), uniform_tensor(shape, seed + 7)};
    const auto out = decode(encode(in, {0.0}));
    bool same = out.size() == in.size();
    for (std::size_t i = 0; same && i < in.size(); ++i)
      same = std::memcmp(in[i].data().data(), out[i].data().data(), in[i].numel() * 4) == 0;
    ok += same;
  }
  return {ok == 100, fmt("%zu/100 chunks bit-identical after tau=0 round trip", ok)};
}

Outcome chunk_direction() {
  const auto samples = correlated_samples(64, 16, 28, 28, 2024);
  const std::vector<std::size_t> ks{1, 2, 4, 8, 16};
  const auto rows = profile_compressibility(samples, {1e-3}, ks);
  const double r1 = rows[0].ratio, r2 = rows[1].ratio, r4 = rows[2].ratio, r16 = rows[4].ratio;
  return {r2 <= r1 && r16 <= r4,
          fmt("ratio k=1 %.4f, k=2 %.4f, k=4 %.4f, k=8 %.4f, k=16 %.4f", r1, r2, r4, rows[3].ratio, r16)};
}

// Asserted at the policy's default tolerance; the other tolerances are reported.
Outcome depth_direction() {
  constexpr int kSeeds = 20;
  const double asserted = CompressionPolicy{}.default_tolerance;
  const std::vector<double> taus{asserted, 1e-2, 1e-1};
  std::vector<int> deeper_smaller(taus.size());
  double sum1 = 0, sum2 = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto ds = gen_synthetic_dataset(derive_seed(seed, 1), 16);
    const auto net = RefNet::create(derive_seed(seed, 3));
    std::vector<Tensor> s1, s2;
    for (const auto& img : ds.images) {
      s1.push_back(net.forward(img, 1));
      s2.push_back(net.forward(img, 2));
    }
    const std::vector<std::size_t> k{2};
    for (std::size_t t = 0; t < taus.size(); ++t) {
      const double r1 = profile_compressibility(s1, {taus[t]}, k)[0].ratio;
      const double r2 = profile_compressibility(s2, {taus[t]}, k)[0].ratio;
      if (t == 0) {
        sum1 += r1;
        sum2 += r2;
      }
      deeper_smaller[t] += r2 <= r1;
    }
  }
  return {deeper_smaller[0] >= kDepthPassFraction * kSeeds,
          fmt("tau %g: stage-2 ratio <= stage-1 ratio for %d/%d seeds (need %.0f), mean stage1 %.4f, stage2 %.4f; "
              "also tau 1e-2 %d/%d, tau 1e-1 %d/%d",
              asserted, deeper_smaller[0], kSeeds, kDepthPassFraction * kSeeds, sum1 / kSeeds, sum2 / kSeeds,
              deeper_smaller[1], kSeeds, deeper_smaller[2], kSeeds)};
}

Outcome shuffle_contract() {
  constexpr std::size_t n = 64, k = 2;
  const auto path = std::filesystem::temp_directory_path() / ("fcache_accept_" + std::to_string(::getpid()) + ".afc");
  std::vector<SampleRecord> recs;
  for (std::size_t i = 0; i < n; ++i) recs.push_back({uniform_tensor({2, 4, 4}, i), std::int64_t(i % 4), {}, {}});
  BuildOptions o;
  o.chunk_size = k;
  build_cache(recs, o, path);
  const auto cache = CacheHandle::open(path);

  int perm_ok = 0, adjacent_ok = 0;
  std::vector<std::vector<std::uint64_t>> chunk_orders;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<std::uint64_t> ids;
    auto it = shuffled_epoch_iter(cache, 1000 + seed, 2);
    while (auto s = it.next()) ids.push_back(s->index);
    auto sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    bool perm = sorted.size() == n;
    for (std::size_t i = 0; perm && i < n; ++i) perm = sorted[i] == i;
    perm_ok += perm;
    bool adjacent = ids.size() == n;
    std::vector<std::uint64_t> chunks;
    for (std::size_t p = 0; adjacent && p < n; p += k) {
      adjacent = ids[p] / k == ids[p + 1] / k;
      chunks.push_back(ids[p] / k);
    }
    adjacent_ok += adjacent;
    chunk_orders.push_back(chunks);
  }
  int differ = 0;
  for (std::size_t s = 0; s < 50; ++s) differ += chunk_orders[s] != chunk_orders[(s + 1) % 50];
  std::filesystem::remove(path);
  return {perm_ok == 50 && adjacent_ok == 50 && differ >= 49,
          fmt("permutation %d/50, chunk adjacency %d/50, differing chunk orders %d/50 seed pairs (need 49)", perm_ok,
              adjacent_ok, differ)};
}

Outcome channel_selection() {
  const std::vector<std::uint32_t> asym{1, 2, 5, 7};
  int stack_ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [orig, flipped] = mirror_stack(seed, asym);
    stack_ok += select_sensitive_channels(score_channels(orig, flipped), 0.5).indices == asym;
  }
  // Dyadic gamma = g/16 so the exact rational round-half-up is an integer formula.
  int grid_ok = 0, grid_total = 0;
  for (std::size_t c = 1; c <= 300; ++c)
    for (std::size_t g = 0; g <= 16; ++g) {
      const std::size_t expect = (2 * g * c + 16) / 32;
      ++grid_total;
      std::vector<double> scores(c, 0.5);
      grid_ok += selection_size(g / 16.0, c) == expect &&
                 select_sensitive_channels(scores, g / 16.0).indices.size() == expect;
    }
  const std::vector<double> s256(256, 0.0);
  const std::size_t x = select_sensitive_channels(s256, 0.1).indices.size();
  return {stack_ok == 20 && grid_ok == grid_total && x == 26,
          fmt("asymmetric channels selected %d/20 stacks, cardinality grid %d/%d, gamma=0.1 c=256 -> %zu", stack_ok,
              grid_ok, grid_total, x)};
}

Outcome token_matching() {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto ori = uniform_tensor({16, 8}, seed), aug = uniform_tensor({16, 8}, seed + 5000);
    std::vector<TokenMatch> oracle;
    for (std::uint32_t i = 0; i < 16; ++i) {
      TokenMatch best{i, 0, -std::numeric_limits<double>::infinity()};
      for (std::uint32_t j = 0; j < 16; ++j) {
        const double s = cosine_similarity(ori.slice(i), aug.slice(j));
        if (s > best.similarity) best = {i, j, s};
      }
      oracle.push_back(best);
    }
    const double alpha = 0.0625 * double(seed % 17);
    auto ranked = oracle;
    std::sort(ranked.begin(), ranked.end(), [](const TokenMatch& a, const TokenMatch& b) {
      return a.similarity < b.similarity || (a.similarity == b.similarity && a.original < b.original);
    });
    ranked.resize(static_cast<std::size_t>(std::floor(alpha * 16 + 0.5)));
    const auto matches = match_tokens(ori, aug);
    ok += matches == oracle && select_tokens(matches, alpha) == ranked;
  }
  return {ok == 100, fmt("%d/100 instances (N=16, D=8) equal the brute-force oracle", ok)};
}

Outcome storage_arithmetic() {
  const double r = expansion_ratio({{224, 224, 3}, 1.0}, {{56, 56, 256}, 4.0});
  const double deit = expansion_ratio({{224, 224, 3}, 1.0}, {{198, 384}, 4.0});
  return {std::abs(r - kExpansionTarget) <= kExpansionTolerance,
          fmt("expansion %.4f (target %.2f +/- %.2f); token example %.4f", r, kExpansionTarget, kExpansionTolerance,
              deit)};
}

Outcome cost_accounting() {
  auto stage = [](std::uint64_t flops, std::uint64_t epochs) {
    StageCost s;
    s.flops_per_sample = flops;
    s.epochs = epochs;
    s.samples = 50000;
    return s;
  };
  const std::vector<StageCost> one{stage(1'660'000'000, 160)};
  const std::vector<StageCost> three{stage(1'660'000'000, 30), stage(1'080'000'000, 30), stage(530'000'000, 100)};
  const auto a = cost_totals(one).total_flops, b = cost_totals(three).total_flops;
  return {a == 13'280'000'000'000'000ULL && b == 6'760'000'000'000'000ULL,
          fmt("single stage %llu (expect 13280000000000000), three stages %llu (expect 6760000000000000)",
              static_cast<unsigned long long>(a), static_cast<unsigned long long>(b))};
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  double raw = 0, comp = 0;
  int aug_wins = 0;
  std::string per_seed;
  for (std::uint64_t seed : {7, 8, 9}) {
    E2eConfig cfg;
    cfg.seed = seed;
    cfg.train_samples = 2000;
    cfg.tolerance = 1e-2;
    cfg.gamma = 0.25;
    const auto r = run_end_to_end(cfg);
    raw += r.acc_raw;
    comp += r.acc_compressed;
    aug_wins += r.acc_flip_aug >= r.acc_flip_naive;
    per_seed += fmt(" [seed %llu raw %.4f comp %.4f naive %.4f aug %.4f ratio %.3f]",
                    static_cast<unsigned long long>(seed), r.acc_raw, r.acc_compressed, r.acc_flip_naive,
                    r.acc_flip_aug, r.compression_ratio);
  }
  raw /= 3;
  comp /= 3;
  const double s = seconds_since(t0);
  const double gap = std::abs(comp - raw);
  return {gap <= kAccuracyGapLimit && aug_wins >= 2 && s < kEndToEndBudgetSeconds,
          fmt("mean acc raw %.4f, compressed %.4f (gap %.2f pp, limit 1 pp); aug >= naive flip in %d/3 seeds; %.0fs",
              raw, comp, 100 * gap, aug_wins, s) +
              per_seed};
}

Outcome gradient_check() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed + 100);
    auto probe = init_probe(32, 4, seed);
    for (auto& b : probe.bias) b = r.uniform(-1, 1);
    const auto x = uniform_tensor({32}, seed + 900);
    const int label = static_cast<int>(r.below(4));
    LinearProbe grad;
    probe_loss(probe, x.data(), label, &grad);
    const std::size_t wi = r.below(probe.weights.size());
    const double h = 1e-5, keep = probe.weights[wi];
    probe.weights[wi] = keep + h;
    const double up = probe_loss(probe, x.data(), label);
    probe.weights[wi] = keep - h;
    const double down = probe_loss(probe, x.data(), label);
    probe.weights[wi] = keep;
    const double fd = (up - down) / (2 * h), an = grad.weights[wi];
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
  }
  return {worst <= kGradientRelErrorLimit, fmt("worst relative error %.3g over 10 probes (limit 1e-4)", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"error-bound", error_bound},
      {"lossless", lossless},
      {"chunk-size-direction", chunk_direction},
      {"depth-direction", depth_direction},
      {"shuffle-contract", shuffle_contract},
      {"channel-selection", channel_selection},
      {"token-matching", token_matching},
      {"storage-arithmetic", storage_arithmetic},
      {"cost-accounting", cost_accounting},
      {"end-to-end", end_to_end},
      {"gradient-check", gradient_check},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-22s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
