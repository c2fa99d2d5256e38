// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

namespace coopcast {

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  double total = 0.0;
};

// Maximum-weight one-to-one assignment of size min(n, m) on an n x m matrix,
// O(max(n,m)^3) via the Jonker-Volgenant potentials method on the negated,
// zero-padded square problem. Rows are augmented in index order and ties in
// reduced cost resolve to the lowest column scan index, so the result is
// deterministic and prefers low (row, col) among equal-weight optima.
// Weights must be finite. An empty matrix yields an empty assignment.
Assignment hungarian_max(const std::vector<std::vector<double>>& weights);

}  // namespace coopcast
