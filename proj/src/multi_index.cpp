#include "mulform/multi_index.hpp"

#include <array>
#include <memory>
#include <mutex>

#include "mulform/errors.hpp"

namespace mulform {

namespace {

struct DimTables {
  std::vector<MultiIndexTable> by_degree;
  std::vector<int> position;  // indexed by mask
};

DimTables build(int d) {
  DimTables t;
  t.by_degree.resize(static_cast<std::size_t>(d) + 1);
  t.position.assign(std::size_t{1} << d, -1);
  // Lexicographic enumeration by recursion over the smallest element.
  std::vector<int> cur;
  auto rec = [&](auto&& self, int start, int k) -> void {
    if (static_cast<int>(cur.size()) == k) {
      Mask m = 0;
      for (int i : cur) m |= Mask{1} << i;
      auto& tab = t.by_degree[static_cast<std::size_t>(k)];
      t.position[m] = static_cast<int>(tab.masks.size());
      tab.masks.push_back(m);
      tab.indices.push_back(cur);
      return;
    }
    for (int i = start; i < d; ++i) {
      cur.push_back(i);
      self(self, i + 1, k);
      cur.pop_back();
    }
  };
  for (int k = 0; k <= d; ++k) rec(rec, 0, k);
  return t;
}

const DimTables& tables(int d) {
  if (d < 0 || d > kMaxDim) throw ShapeError("dimension " + std::to_string(d) + " outside [0, 16]");
  static std::array<std::unique_ptr<DimTables>, kMaxDim + 1> cache;
  static std::array<std::once_flag, kMaxDim + 1> once;
  std::call_once(once[static_cast<std::size_t>(d)],
                 [d] { cache[static_cast<std::size_t>(d)] = std::make_unique<DimTables>(build(d)); });
  return *cache[static_cast<std::size_t>(d)];
}

}  // namespace

const MultiIndexTable& multi_indices(int d, int k) {
  const DimTables& t = tables(d);
  if (k < 0) throw ShapeError("negative degree");
  static const MultiIndexTable empty;
  if (k > d) return empty;
  return t.by_degree[static_cast<std::size_t>(k)];
}

int multi_index_position(int d, Mask mask) { return tables(d).position[mask]; }

int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return static_cast<int>(r);
}

int sort_sign(const std::vector<int>& idx, Mask& mask) {
  mask = 0;
  int inversions = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    const Mask bit = Mask{1} << idx[a];
    if (mask & bit) return 0;
    inversions += popcount(mask & ~((bit << 1) - 1));  // earlier entries larger than idx[a]
    mask |= bit;
  }
  return inversions % 2 ? -1 : 1;
}

}  // namespace mulform
