// Copyright (c) 2026 CoopCast Authors
// SPDX-License-Identifier: Apache-2.0
#include "coopcast/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coopcast/errors.hpp"

namespace coopcast {

Assignment hungarian_max(const std::vector<std::vector<double>>& weights) {
  const int n = static_cast<int>(weights.size());
  const int m = n > 0 ? static_cast<int>(weights[0].size()) : 0;
  Assignment out;
  if (n == 0 || m == 0) return out;
  for (const auto& row : weights) {
    if (static_cast<int>(row.size()) != m)
      throw NumericError("hungarian_max: ragged weight matrix");
    for (double w : row)
      if (!std::isfinite(w)) throw NumericError("hungarian_max: non-finite weight");
  }

  // Pad to square and negate: minimizing -w over a perfect matching on the
  // padded square equals maximizing w over size-min(n,m) assignments, since
  // dummy rows/columns cost 0.
  const int s = std::max(n, m);
  auto cost = [&](int i, int j) -> double {
    if (i < n && j < m) return -weights[i][j];
    return 0.0;
  };

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(s + 1, 0.0), v(s + 1, 0.0);
  std::vector<int> p(s + 1, 0), way(s + 1, 0);
  for (int i = 1; i <= s; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(s + 1, kInf);
    std::vector<char> used(s + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= s; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= s; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= s; ++j) {
    int i = p[j];
    if (i >= 1 && i <= n && j <= m) {
      out.pairs.emplace_back(i - 1, j - 1);
      out.total += weights[i - 1][j - 1];
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

}  // namespace coopcast
