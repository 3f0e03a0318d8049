#include "fcache/raw_dump.hpp"

#include <fstream>
#include <string>

#include "fcache/bytes.hpp"
#include "fcache/error.hpp"

namespace fcache {

namespace {

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) {
    const auto kind = std::filesystem::exists(path) ? ErrorKind::Io : ErrorKind::NotFound;
    throw Error(kind, "cannot open " + path.string());
  }
  return in;
}

}  // namespace

void write_raw_dump(const std::filesystem::path& path, const std::vector<Tensor>& tensors) {
  if (tensors.empty()) throw Error(ErrorKind::InvalidConfig, "raw dump needs at least one tensor");
  const Shape& shape = tensors.front().shape();
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
  w.u64(tensors.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.size()));
  for (const auto& t : tensors) {
    if (t.shape() != shape) throw Error(ErrorKind::ShapeMismatch, "raw dump tensors must share one shape");
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw Error(ErrorKind::Io, "writing " + path.string() + " failed");
}

std::vector<Tensor> read_raw_dump(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::binary);
  auto read_exact = [&](void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw Error(ErrorKind::Format, "raw dump truncated: " + path.string());
  };
  std::uint32_t rank = 0;
  read_exact(&rank, 4);
  if (rank == 0 || rank > 8) throw Error(ErrorKind::Format, "raw dump rank must be 1..8");
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint32_t v = 0;
    read_exact(&v, 4);
    if (v == 0) throw Error(ErrorKind::Format, "raw dump has a zero dimension");
    d = v;
  }
  std::uint64_t count = 0;
  read_exact(&count, 8);
  const std::size_t numel = shape_numel(shape);
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    std::vector<float> data(numel);
    read_exact(data.data(), numel * sizeof(float));
    out.emplace_back(shape, std::move(data));
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::int64_t>& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot create " + path.string());
  for (auto l : labels) out << l << '\n';
}

std::vector<std::int64_t> read_labels(const std::filesystem::path& path) {
  auto in = open_input(path, std::ios::in);
  std::vector<std::int64_t> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t used = 0;
    try {
      labels.push_back(std::stoll(line, &used));
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != line.size()) throw Error(ErrorKind::Format, "label file line " + std::to_string(lineno) + " is not an integer");
  }
  return labels;
}

}  // namespace fcache
