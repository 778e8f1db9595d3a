#pragma once

// Uniform periodic grid on T^d = R^d / Z^d, d in {1, 2}.

#include <cmath>
#include <cstdint>
#include <string>

#include "weakkam/core.hpp"

namespace weakkam {

/// n points per axis at k/n, row-major index = i0 + n * i1.
class GridTorus {
 public:
  GridTorus(int dim, int n_per_axis) : dim_(dim), n_(n_per_axis) {
    if (dim != 1 && dim != 2) {
      throw DomainError("unsupported_dim: torus dimension must be 1 or 2, got " + std::to_string(dim));
    }
    if (n_per_axis < 4) {
      throw DomainError("grid needs at least 4 points per axis, got " + std::to_string(n_per_axis));
    }
  }

  int dim() const { return dim_; }
  int n_per_axis() const { return n_; }
  double spacing() const { return 1.0 / n_; }
  int point_count() const { return dim_ == 1 ? n_ : n_ * n_; }

  std::array<int, 2> multi_index(int idx) const {
    return dim_ == 1 ? std::array<int, 2>{idx, 0} : std::array<int, 2>{idx % n_, idx / n_};
  }

  int index(int i0, int i1 = 0) const {
    i0 = wrap_index(i0);
    return dim_ == 1 ? i0 : i0 + n_ * wrap_index(i1);
  }

  Vec2 coords(int idx) const {
    auto m = multi_index(idx);
    return {m[0] * spacing(), dim_ == 2 ? m[1] * spacing() : 0.0};
  }

  /// Grid index of idx moved by (d0, d1) cells with wraparound.
  int shift(int idx, int d0, int d1 = 0) const {
    auto m = multi_index(idx);
    return index(m[0] + d0, m[1] + d1);
  }

  /// Minimal-image cell offset in [-n/2, n/2).
  int wrap_cells(int d) const {
    int m = ((d % n_) + n_) % n_;
    if (2 * m >= n_) m -= n_;
    return m;
  }

  std::array<int, 2> cell_displacement(int from, int to) const {
    auto a = multi_index(from);
    auto b = multi_index(to);
    return {wrap_cells(b[0] - a[0]), dim_ == 2 ? wrap_cells(b[1] - a[1]) : 0};
  }

  /// Nearest grid index to a point of [0,1)^d (any real coordinates accepted).
  int nearest(const Vec2& x) const {
    auto snap = [this](double c) { return static_cast<int>(std::lround(c * n_)); };
    return index(snap(x[0]), dim_ == 2 ? snap(x[1]) : 0);
  }

  bool operator==(const GridTorus& o) const { return dim_ == o.dim_ && n_ == o.n_; }

 private:
  int wrap_index(int i) const { return ((i % n_) + n_) % n_; }

  int dim_;
  int n_;
};

inline GridTorus build_grid(int dim, int n) { return GridTorus(dim, n); }

/// Wraps a coordinate into [0, 1).
inline double wrap_unit(double c) {
  double w = c - std::floor(c);
  return w >= 1.0 ? 0.0 : w;
}

inline Vec2 wrap_point(const GridTorus& g, const Vec2& x) {
  return {wrap_unit(x[0]), g.dim() == 2 ? wrap_unit(x[1]) : 0.0};
}

/// Minimal-image displacement y - x, each component in [-1/2, 1/2); exact
/// half-period ties go to -1/2.
inline Vec2 wrap_displacement(const GridTorus& g, const Vec2& x, const Vec2& y) {
  auto wrap = [](double d) { return d - std::floor(d + 0.5); };
  return {wrap(y[0] - x[0]), g.dim() == 2 ? wrap(y[1] - x[1]) : 0.0};
}

inline double torus_distance(const GridTorus& g, const Vec2& x, const Vec2& y) {
  return norm(wrap_displacement(g, x, y));
}

/// Torus distance between grid points, computed from integer offsets.
inline double grid_distance(const GridTorus& g, int a, int b) {
  auto d = g.cell_displacement(a, b);
  return g.spacing() * std::sqrt(static_cast<double>(d[0]) * d[0] + static_cast<double>(d[1]) * d[1]);
}

}  // namespace weakkam
