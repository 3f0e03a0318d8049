#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fcache/codec.hpp"
#include "fcache/tensor.hpp"

namespace fcache {

struct FreezeEvent {
  std::uint32_t stage = 0;
  std::uint32_t epoch = 0;
  double tolerance = 0.0;
};

/// Validated sequence of freeze events: strictly increasing stage ids,
/// non-decreasing epochs, tolerances >= 0.
class FreezeSchedule {
 public:
  explicit FreezeSchedule(std::vector<FreezeEvent> events);
  const std::vector<FreezeEvent>& events() const noexcept { return events_; }

 private:
  std::vector<FreezeEvent> events_;
};

/// One tolerance for every stage unless overridden. Deeper stages already
/// compress better at equal tolerance, so the uniform default is the policy.
struct CompressionPolicy {
  double default_tolerance = 1e-3;
  std::map<std::uint32_t, double> overrides;
};

double tolerance_for(std::uint32_t stage, const CompressionPolicy& policy);

FreezeSchedule make_schedule(std::span<const std::pair<std::uint32_t, std::uint32_t>> stage_epochs,
                             const CompressionPolicy& policy);

struct ProfileRow {
  std::size_t chunk_size = 0;
  double ratio = 0.0;
  double encode_seconds = 0.0;
  double decode_seconds_per_sample = 0.0;
};

/// Compresses `samples` in consecutive chunks of each requested size (the
/// last chunk may be short) and reports aggregate encoded/raw bytes plus
/// wall-clock timings. Ratios are deterministic; timings are not.
std::vector<ProfileRow> profile_compressibility(std::span<const Tensor> samples, const CodecParams& params,
                                                std::span<const std::size_t> chunk_sizes);

void write_profile_csv(std::ostream& out, std::span<const ProfileRow> rows);

struct ElementSpec {
  Shape shape;
  double bytes_per_element = 4.0;
};

/// Activation bytes over input bytes.
double expansion_ratio(const ElementSpec& input, const ElementSpec& activation);

struct StageCost {
  std::string name;
  std::uint64_t flops_per_sample = 0;           // forward+backward of the unfrozen remainder
  std::uint64_t overhead_flops_per_sample = 0;  // activation generation / decompression
  double memory_mb = 0.0;
  std::uint64_t epochs = 0;
  std::uint64_t samples = 0;

  std::uint64_t total_flops() const;
};

struct CostTotals {
  std::uint64_t total_flops = 0;
  double average_memory_mb = 0.0;  // epoch-weighted
  double minimum_memory_mb = 0.0;  // last stage, once every freeze is in place
};

CostTotals cost_totals(std::span<const StageCost> stages);

/// Stage CSV: stage,flops_per_sample,overhead_flops_per_sample,memory_mb,epochs,samples
std::vector<StageCost> read_stage_csv(std::istream& in);
/// Per-stage rows followed by a `total` row: stage,flops_total,avg_mem,min_mem
void write_cost_csv(std::ostream& out, std::span<const StageCost> stages);

}  // namespace fcache
