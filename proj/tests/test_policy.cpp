#include <gtest/gtest.h>

#include <sstream>

#include "fcache/codec.hpp"
#include "fcache/policy.hpp"
#include "test_support.hpp"

using namespace fcache;
using fcache::testing::correlated_samples;
using fcache::testing::expect_error;

namespace {

StageCost stage(std::uint64_t gflops_x100, std::uint64_t epochs, double mem = 0.0, std::uint64_t n = 50000) {
  StageCost s;
  s.flops_per_sample = gflops_x100 * 10'000'000ULL;  // hundredths of a GFLOP
  s.epochs = epochs;
  s.samples = n;
  s.memory_mb = mem;
  return s;
}

}  // namespace

TEST(Policy, ToleranceLookup) {
  CompressionPolicy p;
  for (std::uint32_t s = 0; s < 5; ++s) EXPECT_EQ(tolerance_for(s, p), 1e-3);
  p.overrides[2] = 5e-2;
  EXPECT_EQ(tolerance_for(2, p), 5e-2);
  EXPECT_EQ(tolerance_for(1, p), 1e-3);
  EXPECT_EQ(tolerance_for(3, p), 1e-3);
  EXPECT_EQ(tolerance_for(7, CompressionPolicy{0.0, {}}), 0.0);
}

TEST(Policy, ScheduleValidation) {
  const std::vector<std::pair<std::uint32_t, std::uint32_t>> ok{{1, 10}, {2, 10}, {4, 30}};
  const auto sched = make_schedule(ok, CompressionPolicy{1e-2, {{4, 0.0}}});
  ASSERT_EQ(sched.events().size(), 3u);
  EXPECT_EQ(sched.events()[0].tolerance, 1e-2);
  EXPECT_EQ(sched.events()[2].tolerance, 0.0);

  expect_error(ErrorKind::InvalidConfig, [] { FreezeSchedule({{2, 1, 0.1}, {2, 3, 0.1}}); });
  expect_error(ErrorKind::InvalidConfig, [] { FreezeSchedule({{1, 5, 0.1}, {2, 3, 0.1}}); });
  expect_error(ErrorKind::InvalidConfig, [] { FreezeSchedule({{1, 5, -0.1}}); });
  expect_error(ErrorKind::InvalidConfig, [&] { make_schedule(ok, CompressionPolicy{-1.0, {}}); });
}

TEST(Expansion, StatedExamples) {
  EXPECT_NEAR(expansion_ratio({{224, 224, 3}, 1}, {{56, 56, 256}, 4}), 21.333, 0.001);
  EXPECT_NEAR(expansion_ratio({{224, 224, 3}, 1}, {{198, 384}, 4}), 2.0204, 0.0001);
  EXPECT_EQ(expansion_ratio({{3, 4}, 2}, {{3, 4}, 2}), 1.0);
  expect_error(ErrorKind::InvalidShape, [] { expansion_ratio({{0, 4}, 1}, {{1}, 1}); });
}

TEST(Cost, SingleStageHandArithmetic) {
  const std::vector<StageCost> s{stage(166, 160)};
  EXPECT_EQ(cost_totals(s).total_flops, 13'280'000'000'000'000ULL);
}

TEST(Cost, ThreeStageHandArithmetic) {
  const std::vector<StageCost> s{stage(166, 30, 9.0), stage(108, 30, 6.0), stage(53, 100, 3.0)};
  const auto t = cost_totals(s);
  EXPECT_EQ(t.total_flops, 6'760'000'000'000'000ULL);
  EXPECT_DOUBLE_EQ(t.average_memory_mb, (9.0 * 30 + 6.0 * 30 + 3.0 * 100) / 160.0);
  EXPECT_EQ(t.minimum_memory_mb, 3.0);
}

TEST(Cost, OverheadAndZeroEpochs) {
  auto a = stage(100, 2);
  a.overhead_flops_per_sample = 5;
  const std::vector<StageCost> s{a, stage(999, 0, 100.0)};
  EXPECT_EQ(cost_totals(s).total_flops, (1'000'000'000ULL + 5) * 50000 * 2);
}

TEST(Cost, AdditiveAndLinearProperty) {
  const std::vector<StageCost> a{stage(166, 30), stage(108, 30)}, b{stage(53, 100)};
  std::vector<StageCost> ab(a);
  ab.insert(ab.end(), b.begin(), b.end());
  EXPECT_EQ(cost_totals(ab).total_flops, cost_totals(a).total_flops + cost_totals(b).total_flops);
  const std::vector<StageCost> doubled{stage(166, 30, 0, 100000), stage(108, 30, 0, 100000)};
  EXPECT_EQ(cost_totals(doubled).total_flops, 2 * cost_totals(a).total_flops);
}

TEST(Cost, ErrorsAndOverflow) {
  expect_error(ErrorKind::InvalidConfig, [] { cost_totals(std::vector<StageCost>{}); });
  auto huge = stage(0, 1000);
  huge.flops_per_sample = 1ULL << 60;
  expect_error(ErrorKind::InvalidValue, [&] { cost_totals(std::vector<StageCost>{huge}); });
}

TEST(Cost, CsvRoundTrip) {
  std::istringstream in(
      "stage,flops_per_sample,overhead_flops_per_sample,memory_mb,epochs,samples\n"
      "s1,1660000000,0,9.5,30,50000\n"
      "s2,1080000000,0,6,30,50000\r\n"
      "\n"
      "s3,530000000,0,3,100,50000\n");
  const auto stages = read_stage_csv(in);
  ASSERT_EQ(stages.size(), 3u);
  EXPECT_EQ(stages[0].name, "s1");
  EXPECT_EQ(cost_totals(stages).total_flops, 6'760'000'000'000'000ULL);

  std::ostringstream out;
  write_cost_csv(out, stages);
  const auto text = out.str();
  EXPECT_EQ(text.rfind("stage,flops_total,avg_mem,min_mem\n", 0), 0u);
  EXPECT_NE(text.find("s1,2490000000000000,"), std::string::npos) << text;
  EXPECT_NE(text.find("total,6760000000000000,"), std::string::npos) << text;

  std::istringstream bad("s1,abc,0,1,1,1\n");
  expect_error(ErrorKind::Format, [&] { read_stage_csv(bad); });
  std::istringstream short_row("s1,1,2\n");
  expect_error(ErrorKind::Format, [&] { read_stage_csv(short_row); });
}

TEST(Profile, RowsPerChunkSizeAndDirection) {
  const auto samples = correlated_samples(32, 4, 16, 16, 3);
  const std::vector<std::size_t> ks{1, 2, 4, 8, 16};
  const auto rows = profile_compressibility(samples, {1e-3}, ks);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].chunk_size, ks[i]);
    if (i > 0) {
      EXPECT_LE(rows[i].ratio, rows[i - 1].ratio);
    }
  }
  const auto again = profile_compressibility(samples, {1e-3}, ks);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(again[i].ratio, rows[i].ratio);

  std::ostringstream csv;
  write_profile_csv(csv, rows);
  const std::string text = csv.str();
  EXPECT_EQ(text.rfind("chunk_size,ratio,encode_s,decode_s_per_sample\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
}

TEST(Profile, SingleSampleMatchesCodec) {
  const auto one = correlated_samples(1, 3, 8, 8, 1);
  const std::vector<std::size_t> ks{1};
  EXPECT_EQ(profile_compressibility(one, {1e-3}, ks)[0].ratio, compression_ratio(encode(one, {1e-3})));
}

TEST(Profile, TooFewSamples) {
  const auto few = correlated_samples(3, 1, 4, 4, 1);
  const std::vector<std::size_t> ks{1, 4};
  expect_error(ErrorKind::InvalidConfig, [&] { profile_compressibility(few, {1e-3}, ks); });
}
