#include "fcache/policy.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fcache/error.hpp"

namespace fcache {

FreezeSchedule::FreezeSchedule(std::vector<FreezeEvent> events) : events_(std::move(events)) {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    const auto& e = events_[i];
    if (!std::isfinite(e.tolerance) || e.tolerance < 0.0)
      throw Error(ErrorKind::InvalidConfig, "freeze event tolerance must be finite and >= 0");
    if (i > 0) {
      if (e.stage <= events_[i - 1].stage) throw Error(ErrorKind::InvalidConfig, "stage ids must strictly increase");
      if (e.epoch < events_[i - 1].epoch) throw Error(ErrorKind::InvalidConfig, "freeze epochs must not decrease");
    }
  }
}

double tolerance_for(std::uint32_t stage, const CompressionPolicy& policy) {
  if (auto it = policy.overrides.find(stage); it != policy.overrides.end()) return it->second;
  return policy.default_tolerance;
}

FreezeSchedule make_schedule(std::span<const std::pair<std::uint32_t, std::uint32_t>> stage_epochs,
                             const CompressionPolicy& policy) {
  if (!std::isfinite(policy.default_tolerance) || policy.default_tolerance < 0.0)
    throw Error(ErrorKind::InvalidConfig, "default tolerance must be finite and >= 0");
  std::vector<FreezeEvent> events;
  for (auto [stage, epoch] : stage_epochs) events.push_back({stage, epoch, tolerance_for(stage, policy)});
  return FreezeSchedule(std::move(events));
}

std::vector<ProfileRow> profile_compressibility(std::span<const Tensor> samples, const CodecParams& params,
                                                std::span<const std::size_t> chunk_sizes) {
  std::size_t largest = 0;
  for (auto k : chunk_sizes) {
    if (k == 0) throw Error(ErrorKind::InvalidConfig, "chunk sizes must be >= 1");
    largest = std::max(largest, k);
  }
  if (chunk_sizes.empty()) throw Error(ErrorKind::InvalidConfig, "no chunk sizes requested");
  if (samples.size() < largest)
    throw Error(ErrorKind::InvalidConfig, "profiling needs at least " + std::to_string(largest) + " samples, got " +
                                              std::to_string(samples.size()));

  using clock = std::chrono::steady_clock;
  std::vector<ProfileRow> rows;
  for (auto k : chunk_sizes) {
    std::uint64_t raw = 0, encoded = 0;
    double enc_s = 0.0, dec_s = 0.0;
    for (std::size_t first = 0; first < samples.size(); first += k) {
      const auto part = samples.subspan(first, std::min(k, samples.size() - first));
      const auto t0 = clock::now();
      const EncodedChunk chunk = encode(part, params);
      const auto t1 = clock::now();
      const auto decoded = decode(chunk);
      const auto t2 = clock::now();
      raw += chunk.raw_bytes;
      encoded += chunk.encoded_bytes;
      enc_s += std::chrono::duration<double>(t1 - t0).count();
      dec_s += std::chrono::duration<double>(t2 - t1).count();
    }
    rows.push_back({k, double(encoded) / double(raw), enc_s, dec_s / double(samples.size())});
  }
  return rows;
}

void write_profile_csv(std::ostream& out, std::span<const ProfileRow> rows) {
  out << "chunk_size,ratio,encode_s,decode_s_per_sample\n";
  out << std::setprecision(9);
  for (const auto& r : rows)
    out << r.chunk_size << ',' << r.ratio << ',' << r.encode_seconds << ',' << r.decode_seconds_per_sample << '\n';
}

double expansion_ratio(const ElementSpec& input, const ElementSpec& activation) {
  auto bytes = [](const ElementSpec& s) {
    if (s.shape.empty() || !(s.bytes_per_element > 0.0))
      throw Error(ErrorKind::InvalidConfig, "element spec needs a shape and positive element size");
    double n = s.bytes_per_element;
    for (auto d : s.shape) {
      if (d == 0) throw Error(ErrorKind::InvalidShape, "dimensions must be positive");
      n *= static_cast<double>(d);
    }
    return n;
  };
  return bytes(activation) / bytes(input);
}

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a)
    throw Error(ErrorKind::InvalidValue, "FLOP total overflows 64 bits");
  return a * b;
}

}  // namespace

std::uint64_t StageCost::total_flops() const {
  return checked_mul(checked_mul(flops_per_sample + overhead_flops_per_sample, samples), epochs);
}

CostTotals cost_totals(std::span<const StageCost> stages) {
  if (stages.empty()) throw Error(ErrorKind::InvalidConfig, "cost_totals needs at least one stage");
  CostTotals t;
  std::uint64_t epochs = 0;
  double weighted = 0.0;
  for (const auto& s : stages) {
    if (!(s.memory_mb >= 0.0)) throw Error(ErrorKind::InvalidValue, "stage memory must be >= 0");
    const auto f = s.total_flops();
    if (t.total_flops > std::numeric_limits<std::uint64_t>::max() - f)
      throw Error(ErrorKind::InvalidValue, "FLOP total overflows 64 bits");
    t.total_flops += f;
    weighted += s.memory_mb * static_cast<double>(s.epochs);
    epochs += s.epochs;
  }
  t.average_memory_mb = epochs > 0 ? weighted / static_cast<double>(epochs) : 0.0;
  t.minimum_memory_mb = stages.back().memory_mb;
  return t;
}

std::vector<StageCost> read_stage_csv(std::istream& in) {
  std::vector<StageCost> stages;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("stage,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6)
      throw Error(ErrorKind::Format, "stage CSV line " + std::to_string(lineno) + ": expected 6 columns");
    try {
      StageCost s;
      s.name = cells[0];
      s.flops_per_sample = std::stoull(cells[1]);
      s.overhead_flops_per_sample = std::stoull(cells[2]);
      s.memory_mb = std::stod(cells[3]);
      s.epochs = std::stoull(cells[4]);
      s.samples = std::stoull(cells[5]);
      stages.push_back(std::move(s));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Format, "stage CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return stages;
}

void write_cost_csv(std::ostream& out, std::span<const StageCost> stages) {
  out << "stage,flops_total,avg_mem,min_mem\n";
  out << std::setprecision(12);
  for (const auto& s : stages) out << s.name << ',' << s.total_flops() << ',' << s.memory_mb << ',' << s.memory_mb << '\n';
  const auto t = cost_totals(stages);
  out << "total," << t.total_flops << ',' << t.average_memory_mb << ',' << t.minimum_memory_mb << '\n';
}

}  // namespace fcache
