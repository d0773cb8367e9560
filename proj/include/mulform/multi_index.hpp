#pragma once

// Strictly increasing multi-indices I = (i1 < ... < ik) in {0..d-1}, stored
// as bitmasks and enumerated in lexicographic order.

#include <cstdint>
#include <vector>

namespace mulform {

constexpr int kMaxDim = 16;

using Mask = std::uint32_t;

struct MultiIndexTable {
  std::vector<Mask> masks;   // lexicographic order
  std::vector<std::vector<int>> indices;
};

/// Lexicographically ordered k-subsets of {0..d-1}. Thread-safe, cached.
const MultiIndexTable& multi_indices(int d, int k);

/// Position of `mask` within multi_indices(d, popcount(mask)).
int multi_index_position(int d, Mask mask);

int binomial(int n, int k);

inline int popcount(Mask m) { return __builtin_popcount(m); }

/// Sign of the permutation sorting `idx` (0 when an index repeats) and the resulting mask.
int sort_sign(const std::vector<int>& idx, Mask& mask);

/// Number of elements of `mask` strictly below bit i.
inline int bits_below(Mask mask, int i) { return popcount(mask & ((Mask{1} << i) - 1)); }

}  // namespace mulform
