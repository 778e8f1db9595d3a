#pragma once

// Covering numbers and Hausdorff-1 / box-dimension surrogates for the Mather
// quotient, the quadratic bound delta_M <= C d^2, and the chain semi-metric
// delta_p on finite point sets.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "weakkam/aubry_mather.hpp"
#include "weakkam/core.hpp"
#include "weakkam/semimetric.hpp"
#include "weakkam/torus.hpp"

namespace weakkam {

struct CoveringReport {
  std::vector<double> scales;
  std::vector<int> covering_counts;
  std::vector<double> h1_estimates;
  /// OLS slope of log N against log 1/r over scales with 1 < N < count; 0 if
  /// fewer than two such scales.
  double dim_slope = 0.0;
  int slope_points = 0;
};

namespace detail {

inline std::vector<int> positions_of(const SemiMetric& delta, std::span<const int> indices) {
  std::vector<int> pos(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    pos[i] = delta.position(indices[i]);
    if (pos[i] < 0) throw DomainError("covering: index " + std::to_string(indices[i]) + " not in delta");
  }
  return pos;
}

inline int greedy_cover(const SemiMetric& delta, const std::vector<int>& pos, double r) {
  // Sets of delta-diameter < 2r: seed at the first uncovered point, then add
  // uncovered points in order whose distance to every member stays < 2r.
  const double diam = 2.0 * r;
  std::vector<char> covered(pos.size(), 0);
  std::vector<int> members;
  int count = 0;
  for (std::size_t s = 0; s < pos.size(); ++s) {
    if (covered[s]) continue;
    ++count;
    covered[s] = 1;
    members.assign(1, pos[s]);
    for (std::size_t t = s + 1; t < pos.size(); ++t) {
      if (covered[t]) continue;
      bool fits = true;
      for (int m : members) {
        if (!(delta.at(m, pos[t]) < diam)) {
          fits = false;
          break;
        }
      }
      if (fits) {
        covered[t] = 1;
        members.push_back(pos[t]);
      }
    }
  }
  return count;
}

}  // namespace detail

inline int covering_number(const SemiMetric& delta, std::span<const int> indices, double r) {
  if (!(r > 0.0)) throw DomainError("covering_number: r must be > 0");
  return detail::greedy_cover(delta, detail::positions_of(delta, indices), r);
}

/// r0 * 2^-k for k = 0..levels-1, r0 = max pairwise delta (1 if that is 0).
inline std::vector<double> default_scale_grid(const SemiMetric& delta, std::span<const int> indices, int levels = 9) {
  const auto pos = detail::positions_of(delta, indices);
  double r0 = 0.0;
  for (int a : pos)
    for (int b : pos) r0 = std::max(r0, delta.at(a, b));
  if (!(r0 > 0.0)) r0 = 1.0;
  std::vector<double> s(levels);
  for (int k = 0; k < levels; ++k) s[k] = std::ldexp(r0, -k);
  return s;
}

inline CoveringReport hausdorff1_report(const SemiMetric& delta, std::span<const int> indices,
                                        std::span<const double> scales) {
  if (scales.empty()) throw DomainError("hausdorff1_report: empty scale grid");
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (!(scales[k] > 0.0)) throw DomainError("hausdorff1_report: scales must be positive");
    if (k > 0 && !(scales[k] < scales[k - 1])) throw DomainError("hausdorff1_report: scales must be descending");
  }
  const auto pos = detail::positions_of(delta, indices);
  CoveringReport rep;
  rep.scales.assign(scales.begin(), scales.end());
  rep.covering_counts.resize(scales.size());
  for (std::size_t k = 0; k < scales.size(); ++k) rep.covering_counts[k] = detail::greedy_cover(delta, pos, scales[k]);
  // A cover at a finer radius is also a cover at a coarser one.
  for (std::size_t k = scales.size() - 1; k-- > 0;)
    rep.covering_counts[k] = std::min(rep.covering_counts[k], rep.covering_counts[k + 1]);
  rep.h1_estimates.resize(scales.size());
  for (std::size_t k = 0; k < scales.size(); ++k) rep.h1_estimates[k] = rep.covering_counts[k] * 2.0 * scales[k];

  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    const int n = rep.covering_counts[k];
    if (n > 1 && n < static_cast<int>(pos.size())) {
      xs.push_back(std::log(1.0 / scales[k]));
      ys.push_back(std::log(static_cast<double>(n)));
    }
  }
  rep.slope_points = static_cast<int>(xs.size());
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    rep.dim_slope = sxx > 0 ? sxy / sxx : 0.0;
  }
  return rep;
}

inline CoveringReport hausdorff1_report(const SemiMetric& delta, std::span<const int> indices) {
  const auto scales = default_scale_grid(delta, indices);
  return hausdorff1_report(delta, indices, scales);
}

// ---------------------------------------------------------------------------

struct QuadraticBoundReport {
  double max_ratio = 0.0;
  int x = -1;
  int y = -1;
  std::size_t pair_count = 0;
};

/// max of delta(x,y) / d(x,y)^2 over Aubry x and grid y with
/// 2 spacing <= d(x,y) <= window. delta(x, y) is any callable.
template <typename Delta>
QuadraticBoundReport quadratic_bound_scan(Delta&& delta, const AubrySet& a, const GridTorus& g, double window) {
  QuadraticBoundReport rep;
  const double lo = 2.0 * g.spacing() * (1.0 - 1e-12);
  for (int x : a.indices) {
    for (int y = 0; y < g.point_count(); ++y) {
      const double d = grid_distance(g, x, y);
      if (d < lo || d > window) continue;
      ++rep.pair_count;
      const double ratio = delta(x, y) / (d * d);
      if (ratio > rep.max_ratio) {
        rep.max_ratio = ratio;
        rep.x = x;
        rep.y = y;
      }
    }
  }
  return rep;
}

/// delta must cover every grid point (full-grid Mather delta).
inline QuadraticBoundReport quadratic_bound_check(const SemiMetric& delta, const AubrySet& a, const GridTorus& g,
                                                  double window) {
  if (delta.size() != static_cast<std::size_t>(g.point_count()))
    throw DomainError("quadratic_bound_check: delta must be given on the full grid");
  std::vector<int> pos(g.point_count(), -1);
  for (std::size_t k = 0; k < delta.size(); ++k) pos.at(delta.point_ids[k]) = static_cast<int>(k);
  return quadratic_bound_scan([&](int x, int y) { return delta.at(pos[x], pos[y]); }, a, g, window);
}

/// Same scan straight from barrier rows and columns, without a dense matrix.
inline QuadraticBoundReport quadratic_bound_check(const PeierlsBarrier& h, const AubrySet& a, const GridTorus& g,
                                                  double window) {
  QuadraticBoundReport rep;
  const double lo = 2.0 * g.spacing() * (1.0 - 1e-12);
  for (int x : a.indices) {
    const auto out = h.row(x);
    const auto in = h.column(x);
    for (int y = 0; y < g.point_count(); ++y) {
      const double d = grid_distance(g, x, y);
      if (d < lo || d > window) continue;
      ++rep.pair_count;
      const double ratio = (out[y] + in[y]) / (d * d);
      if (ratio > rep.max_ratio) {
        rep.max_ratio = ratio;
        rep.x = x;
        rep.y = y;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// delta_p on a finite point set.

using Point = std::vector<double>;
using PointMetric = std::function<double(const Point&, const Point&)>;

inline double euclidean(const Point& a, const Point& b) {
  if (a.size() != b.size()) throw DomainError("euclidean: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

/// All-pairs shortest paths on the complete graph with weights d(a,b)^p.
/// point_ids are 0..n-1 in input order.
inline SemiMetric ferry_delta_p(const std::vector<Point>& points, const PointMetric& d, double p) {
  if (!(p >= 1.0)) throw DomainError("ferry_delta_p: p must be >= 1");
  const std::size_t n = points.size();
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  SemiMetric m(std::move(ids), true);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m.at(i, j) = i == j ? 0.0 : std::pow(d(points[i], points[j]), p);
  for (std::size_t k = 0; k < n; ++k) {
    // Row k is unchanged during pass k (m[k][k] = 0), so rows update independently.
    parallel_for(n, [&](std::size_t i) {
      const double ik = m.at(i, k);
      for (std::size_t j = 0; j < n; ++j) m.at(i, j) = std::min(m.at(i, j), ik + m.at(k, j));
    });
  }
  return m;
}

inline SemiMetric ferry_delta_p(const std::vector<Point>& points, double p) {
  return ferry_delta_p(points, euclidean, p);
}

/// N+1 equally spaced points on [0,1] in R^1.
inline std::vector<Point> segment_points(int segments) {
  std::vector<Point> pts(segments + 1);
  for (int i = 0; i <= segments; ++i) pts[i] = {static_cast<double>(i) / segments};
  return pts;
}

/// N points on the unit circle in R^2.
inline std::vector<Point> circle_points(int count) {
  std::vector<Point> pts(count);
  for (int i = 0; i < count; ++i) {
    const double a = 2.0 * 3.14159265358979323846 * i / count;
    pts[i] = {std::cos(a), std::sin(a)};
  }
  return pts;
}

}  // namespace weakkam
