#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fcache/tensor.hpp"

namespace fcache {

struct TokenMatch {
  std::uint32_t original = 0;   // row in the original token matrix
  std::uint32_t augmented = 0;  // best-matching row in the augmented matrix
  double similarity = 0.0;

  friend bool operator==(const TokenMatch&, const TokenMatch&) = default;
};

struct TokenSelection {
  double alpha = 0.0;
  std::vector<TokenMatch> matches;  // ascending similarity, ties by lower original index
  std::optional<Tensor> stored;     // augmented rows of `matches`, #selected×D
};

/// For every original token, the augmented token of highest cosine
/// similarity (ties to the lowest augmented index).
std::vector<TokenMatch> match_tokens(const Tensor& original, const Tensor& augmented);

/// The round(alpha * N) least similar matches, ascending.
std::vector<TokenMatch> select_tokens(std::span<const TokenMatch> matches, double alpha);

/// match + select + gather of the stored augmented rows.
TokenSelection build_token_selection(const Tensor& original, const Tensor& augmented, double alpha);

/// Copy of `original` where row m.original is replaced by stored row r for
/// the r-th selected match.
Tensor apply_token_augmentation(const Tensor& original, std::span<const TokenMatch> selected,
                                const std::optional<Tensor>& stored);

}  // namespace fcache
