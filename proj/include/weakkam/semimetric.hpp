#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "weakkam/core.hpp"

namespace weakkam {

/// Dense square matrix of pairwise values over a list of grid indices.
/// Row/column k of `values` corresponds to point_ids[k].
struct SemiMetric {
  std::vector<int> point_ids;
  std::vector<double> values;
  bool symmetric = false;

  SemiMetric() = default;
  SemiMetric(std::vector<int> ids, bool is_symmetric = false)
      : point_ids(std::move(ids)),
        values(point_ids.size() * point_ids.size(), kUnreachable),
        symmetric(is_symmetric) {}

  std::size_t size() const { return point_ids.size(); }
  double& at(std::size_t i, std::size_t j) { return values[i * size() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * size() + j]; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * size(), size()}; }

  std::size_t unreachable_count() const {
    std::size_t n = 0;
    for (double v : values) n += is_reachable(v) ? 0 : 1;
    return n;
  }

  /// max over (i,j,k) of m[i][k] - m[i][j] - m[j][k]; <= 0 means the triangle
  /// inequality holds. Unreachable entries are skipped.
  double triangle_violation() const {
    const std::size_t n = size();
    std::vector<double> worst(n, -kUnreachable);
    parallel_for(n, [&](std::size_t i) {
      double w = -kUnreachable;
      for (std::size_t j = 0; j < n; ++j) {
        const double ij = at(i, j);
        if (!is_reachable(ij)) continue;
        for (std::size_t k = 0; k < n; ++k) {
          const double ik = at(i, k);
          const double jk = at(j, k);
          if (!is_reachable(ik) || !is_reachable(jk)) continue;
          w = std::max(w, ik - ij - jk);
        }
      }
      worst[i] = w;
    });
    double w = -kUnreachable;
    for (double v : worst) w = std::max(w, v);
    return w;
  }

  double max_asymmetry() const {
    double w = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) w = std::max(w, std::abs(at(i, j) - at(j, i)));
    return w;
  }

  /// Position of a grid index in point_ids, or -1.
  int position(int grid_index) const {
    for (std::size_t k = 0; k < point_ids.size(); ++k)
      if (point_ids[k] == grid_index) return static_cast<int>(k);
    return -1;
  }
};

}  // namespace weakkam
