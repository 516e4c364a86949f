#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "hl0/particle_maps.hpp"

namespace hl0 {

// Coalesced groups of tracked points. Each group is represented by its
// smallest member; a member's lift is the representative's lift plus offset.
struct MergeGroups {
  std::vector<std::size_t> root;
  std::vector<double> offset;
  std::vector<std::vector<std::size_t>> members;

  explicit MergeGroups(std::size_t n) : root(n), offset(n, 0.0), members(n) {
    std::iota(root.begin(), root.end(), 0);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  }

  // Merges the groups of roots a and b; `shift` is lift_b - lift_a rounded
  // to the identification in force (a multiple of 2*pi, or 0).
  void merge_shift(std::size_t a, std::size_t b, double shift) {
    if (a > b) {
      std::swap(a, b);
      shift = -shift;
    }
    for (std::size_t i : members[b]) {
      root[i] = a;
      offset[i] += shift;
      members[a].push_back(i);
    }
    members[b].clear();
    std::sort(members[a].begin(), members[a].end());
  }

  void merge(std::size_t a, std::size_t b, double lift_a, double lift_b) {
    merge_shift(a, b, kTwoPi * std::round((lift_b - lift_a) / kTwoPi));
  }

  long long partner(std::size_t i) const {
    const auto& m = members[root[i]];
    if (m.size() < 2) return -1;
    return static_cast<long long>(m[0] == i ? m[1] : m[0]);
  }
};

}  // namespace hl0
