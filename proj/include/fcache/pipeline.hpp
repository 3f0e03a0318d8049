#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "fcache/channel_aug.hpp"
#include "fcache/probe.hpp"

namespace fcache {

struct E2eConfig {
  std::uint64_t seed = 7;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 800;
  std::size_t stage = 1;  // refnet depth the cache is taken at
  double tolerance = 1e-2;
  double gamma = 0.25;
  std::size_t chunk_size = 2;
  double flip_probability = 0.5;
  TrainConfig train{20, 1e-3, 0};
  unsigned workers = 1;
  std::filesystem::path cache_path;  // empty: a temporary file, removed afterwards
};

struct E2eReport {
  double acc_raw = 0.0;         // raw features, clean test set
  double acc_compressed = 0.0;  // cached features, clean test set
  double acc_flip_raw = 0.0;    // raw features without augmentation, flipped test set
  double acc_flip_naive = 0.0;  // cached + plain feature-map flip, flipped test set
  double acc_flip_aug = 0.0;    // cached + similarity-aware flip, flipped test set
  double compression_ratio = 0.0;
  std::uint64_t cache_bytes = 0;
  std::uint64_t raw_feature_bytes = 0;
  ChannelSelection selection;
  std::vector<double> channel_scores;
};

/// Synthetic images → frozen refnet features → compressed cache with
/// similarity-aware payloads → linear probes trained from the shuffled cache.
E2eReport run_end_to_end(const E2eConfig& config);

void write_e2e_csv(std::ostream& out, const E2eReport& report);

}  // namespace fcache
