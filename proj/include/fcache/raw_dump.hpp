#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fcache/tensor.hpp"

namespace fcache {

/// Raw tensor dump: u32 rank, u32 dims[rank], u64 count, then count packed
/// little-endian float32 tensors of that shape.
void write_raw_dump(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_raw_dump(const std::filesystem::path& path);

/// One decimal integer per line.
void write_labels(const std::filesystem::path& path, const std::vector<std::int64_t>& labels);
std::vector<std::int64_t> read_labels(const std::filesystem::path& path);

}  // namespace fcache
