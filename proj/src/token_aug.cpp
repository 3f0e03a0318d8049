#include "fcache/token_aug.hpp"

#include <algorithm>
#include <cmath>

#include "fcache/channel_aug.hpp"
#include "fcache/error.hpp"

namespace fcache {

namespace {

std::vector<double> row_norms(const Tensor& t, const char* which) {
  std::vector<double> norms(t.dim(0));
  for (std::size_t i = 0; i < norms.size(); ++i) {
    double s = 0.0;
    for (float v : t.slice(i)) s += double(v) * v;
    if (s == 0.0)
      throw Error(ErrorKind::DegenerateVector, std::string("zero-norm ") + which + " token at index " + std::to_string(i));
    norms[i] = std::sqrt(s);
  }
  return norms;
}

}  // namespace

std::vector<TokenMatch> match_tokens(const Tensor& original, const Tensor& augmented) {
  if (original.rank() != 2 || augmented.rank() != 2) throw Error(ErrorKind::InvalidShape, "tokens must be N×D");
  if (original.shape() != augmented.shape()) throw Error(ErrorKind::ShapeMismatch, "token matrices differ in shape");
  const auto n_ori = row_norms(original, "original");
  const auto n_aug = row_norms(augmented, "augmented");

  const std::size_t n = original.dim(0);
  std::vector<TokenMatch> matches(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = original.slice(i);
    double best = -2.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto b = augmented.slice(j);
      double dot = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) dot += double(a[d]) * b[d];
      const double s = std::clamp(dot / (n_ori[i] * n_aug[j]), -1.0, 1.0);
      if (s > best) {
        best = s;
        best_j = j;
      }
    }
    matches[i] = TokenMatch{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(best_j), best};
  }
  return matches;
}

std::vector<TokenMatch> select_tokens(std::span<const TokenMatch> matches, double alpha) {
  const std::size_t m = selection_size(alpha, matches.size());
  std::vector<TokenMatch> sorted(matches.begin(), matches.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const TokenMatch& l, const TokenMatch& r) {
    if (l.similarity != r.similarity) return l.similarity < r.similarity;
    return l.original < r.original;
  });
  sorted.resize(m);
  return sorted;
}

TokenSelection build_token_selection(const Tensor& original, const Tensor& augmented, double alpha) {
  TokenSelection sel;
  sel.alpha = alpha;
  sel.matches = select_tokens(match_tokens(original, augmented), alpha);
  if (!sel.matches.empty()) {
    const std::size_t d = augmented.dim(1);
    std::vector<float> rows;
    rows.reserve(sel.matches.size() * d);
    for (const auto& m : sel.matches) {
      auto r = augmented.slice(m.augmented);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    sel.stored = Tensor({sel.matches.size(), d}, std::move(rows));
  }
  return sel;
}

Tensor apply_token_augmentation(const Tensor& original, std::span<const TokenMatch> selected,
                                const std::optional<Tensor>& stored) {
  if (original.rank() != 2) throw Error(ErrorKind::InvalidShape, "tokens must be N×D");
  if (selected.empty()) return original;
  if (!stored) throw Error(ErrorKind::AugmentationUnavailable, "selected tokens have no stored payload");
  if (stored->shape() != Shape{selected.size(), original.dim(1)})
    throw Error(ErrorKind::ShapeMismatch, "stored token tensor " + shape_to_string(stored->shape()) +
                                              " does not match the selection");
  std::vector<float> out = original.values();
  const std::size_t d = original.dim(1);
  for (std::size_t r = 0; r < selected.size(); ++r) {
    const auto i = selected[r].original;
    if (i >= original.dim(0)) throw Error(ErrorKind::OutOfRange, "selected token index out of range");
    auto src = stored->slice(r);
    std::copy(src.begin(), src.end(), out.begin() + i * d);
  }
  return Tensor(original.shape(), std::move(out));
}

}  // namespace fcache
