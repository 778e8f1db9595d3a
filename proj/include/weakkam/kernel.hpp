#pragma once

// One-step action kernel A_tau(x, y) on the torus grid and the min-plus
// primitives shared by every solver.
//
// The kernel is a sparse directed graph: edge x -> y exists when the minimal
// image displacement from x to y lies inside the stencil, with cost
//   tau * L(midpoint(x, y), wrap(y - x) / tau).
// Missing edges are unreachable (+inf).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "weakkam/core.hpp"
#include "weakkam/model.hpp"
#include "weakkam/semimetric.hpp"
#include "weakkam/torus.hpp"

namespace weakkam {

struct Edge {
  int from;
  int to;
  double cost;
};

/// Compressed adjacency in both orientations. Out-rows are sorted by target,
/// in-rows by source.
class CostGraph {
 public:
  CostGraph() = default;

  CostGraph(int nodes, std::vector<Edge> edges) : nodes_(nodes) {
    // +inf costs are simply absent edges.
    std::erase_if(edges, [](const Edge& e) { return e.cost == kUnreachable; });
    for (const auto& e : edges) {
      if (e.from < 0 || e.from >= nodes || e.to < 0 || e.to >= nodes)
        throw DomainError("CostGraph: edge endpoint out of range");
      if (!std::isfinite(e.cost)) throw NumericalError("CostGraph: edge cost must be finite");
    }
    std::sort(edges.begin(), edges.end(),
              [](const Edge& a, const Edge& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
    for (std::size_t k = 1; k < edges.size(); ++k)
      if (edges[k].from == edges[k - 1].from && edges[k].to == edges[k - 1].to)
        throw DomainError("CostGraph: duplicate edge");
    out_ptr_.assign(nodes + 1, 0);
    in_ptr_.assign(nodes + 1, 0);
    for (const auto& e : edges) {
      ++out_ptr_[e.from + 1];
      ++in_ptr_[e.to + 1];
    }
    for (int i = 0; i < nodes; ++i) {
      out_ptr_[i + 1] += out_ptr_[i];
      in_ptr_[i + 1] += in_ptr_[i];
    }
    out_to_.resize(edges.size());
    out_cost_.resize(edges.size());
    in_from_.resize(edges.size());
    in_cost_.resize(edges.size());
    std::vector<int> fill_in(in_ptr_.begin(), in_ptr_.end() - 1);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      out_to_[k] = edges[k].to;
      out_cost_[k] = edges[k].cost;
      const int slot = fill_in[edges[k].to]++;
      in_from_[slot] = edges[k].from;
      in_cost_[slot] = edges[k].cost;
    }
  }

  /// Finite entries of a dense row-major matrix become edges.
  static CostGraph from_dense(int nodes, std::span<const double> matrix) {
    if (matrix.size() != static_cast<std::size_t>(nodes) * nodes)
      throw DomainError("CostGraph::from_dense: matrix is not nodes x nodes");
    std::vector<Edge> edges;
    for (int i = 0; i < nodes; ++i)
      for (int j = 0; j < nodes; ++j)
        if (is_reachable(matrix[i * nodes + j])) edges.push_back({i, j, matrix[i * nodes + j]});
    return CostGraph(nodes, std::move(edges));
  }

  int nodes() const { return nodes_; }
  std::size_t edge_count() const { return out_to_.size(); }

  std::span<const int> out_targets(int i) const { return {out_to_.data() + out_ptr_[i], row_len(out_ptr_, i)}; }
  std::span<const double> out_costs(int i) const { return {out_cost_.data() + out_ptr_[i], row_len(out_ptr_, i)}; }
  std::span<const int> in_sources(int j) const { return {in_from_.data() + in_ptr_[j], row_len(in_ptr_, j)}; }
  std::span<const double> in_costs(int j) const { return {in_cost_.data() + in_ptr_[j], row_len(in_ptr_, j)}; }

  double cost(int i, int j) const {
    auto targets = out_targets(i);
    auto it = std::lower_bound(targets.begin(), targets.end(), j);
    if (it == targets.end() || *it != j) return kUnreachable;
    return out_cost_[out_ptr_[i] + (it - targets.begin())];
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> e;
    e.reserve(edge_count());
    for (int i = 0; i < nodes_; ++i) {
      auto t = out_targets(i);
      auto c = out_costs(i);
      for (std::size_t k = 0; k < t.size(); ++k) e.push_back({i, t[k], c[k]});
    }
    return e;
  }

  /// Same topology, every cost increased by s.
  CostGraph shifted(double s) const {
    CostGraph g = *this;
    for (auto& c : g.out_cost_) c += s;
    for (auto& c : g.in_cost_) c += s;
    return g;
  }

 private:
  static std::size_t row_len(const std::vector<int>& ptr, int i) {
    return static_cast<std::size_t>(ptr[i + 1] - ptr[i]);
  }

  int nodes_ = 0;
  std::vector<int> out_ptr_, out_to_, in_ptr_, in_from_;
  std::vector<double> out_cost_, in_cost_;
};

/// Discrete h_tau. `grid` is absent for hand-built toy kernels.
struct ActionKernel {
  std::optional<GridTorus> grid;
  double tau = 1.0;
  double stencil_radius = 0.0;
  CostGraph graph;

  int point_count() const { return graph.nodes(); }
  double cost(int from, int to) const { return graph.cost(from, to); }

  static ActionKernel from_dense(int nodes, std::span<const double> matrix, double tau = 1.0) {
    if (!(tau > 0.0)) throw DomainError("kernel tau must be > 0");
    ActionKernel k;
    k.tau = tau;
    k.graph = CostGraph::from_dense(nodes, matrix);
    return k;
  }

  const GridTorus& require_grid() const {
    if (!grid) throw DomainError("operation needs a kernel built on a torus grid");
    return *grid;
  }
};

/// Grid-sampled scalar function.
struct ValueFunction {
  GridTorus grid;
  std::vector<double> values;

  ValueFunction(GridTorus g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != static_cast<std::size_t>(grid.point_count()))
      throw DomainError("ValueFunction: value count does not match the grid");
    for (double x : values)
      if (!std::isfinite(x)) throw NumericalError("ValueFunction: values must be finite");
  }

  static ValueFunction constant(const GridTorus& g, double c) {
    return ValueFunction(g, std::vector<double>(g.point_count(), c));
  }

  template <typename F>
  static ValueFunction sample(const GridTorus& g, F&& f) {
    std::vector<double> v(g.point_count());
    for (int i = 0; i < g.point_count(); ++i) v[i] = f(g.coords(i));
    return ValueFunction(g, std::move(v));
  }
};

// ---------------------------------------------------------------------------
// Defaults. tau is an odd multiple of the spacing close to 1/16 so that a unit
// transport advances a cell count coprime with power-of-two grid sizes.

inline double default_tau(const GridTorus& g) {
  int k = std::max(1, static_cast<int>(std::lround(g.n_per_axis() / 16.0)));
  if (k % 2 == 0) ++k;
  return k * g.spacing();
}

inline double default_stencil_radius(const GridTorus& g, double tau) {
  return std::max(4.0 * g.spacing(), 2.0 * tau);
}

/// Minimal-image stencil offsets with |offset| * spacing <= radius.
inline std::vector<std::array<int, 2>> stencil_offsets(const GridTorus& g, double radius) {
  const int n = g.n_per_axis();
  const int reach = std::min(n / 2, static_cast<int>(std::floor(radius / g.spacing() + 1e-9)));
  const double r2 = radius * radius * (1.0 + 1e-12);
  std::vector<std::array<int, 2>> out;
  const int reach1 = g.dim() == 2 ? reach : 0;
  for (int d1 = -reach1; d1 <= reach1; ++d1) {
    for (int d0 = -reach; d0 <= reach; ++d0) {
      // Keep one representative per residue class on small grids.
      if (g.wrap_cells(d0) != d0 || (g.dim() == 2 && g.wrap_cells(d1) != d1)) continue;
      const double len2 = (static_cast<double>(d0) * d0 + static_cast<double>(d1) * d1) * g.spacing() * g.spacing();
      if (len2 <= r2) out.push_back({d0, d1});
    }
  }
  return out;
}

inline ActionKernel build_kernel(const Lagrangian& l, const GridTorus& g, double tau, double stencil_radius) {
  if (!(tau > 0.0)) throw DomainError("build_kernel: tau must be > 0");
  if (!(stencil_radius >= g.spacing() * (1.0 - 1e-12)))
    throw DomainError("build_kernel: stencil_radius must be >= grid spacing");
  const auto offsets = stencil_offsets(g, stencil_radius);
  const int points = g.point_count();
  const std::size_t width = offsets.size();
  std::vector<Edge> edges(static_cast<std::size_t>(points) * width);
  std::vector<std::string> failures(points);
  parallel_for(points, [&](std::size_t i) {
    const Vec2 x = g.coords(static_cast<int>(i));
    for (std::size_t k = 0; k < width; ++k) {
      const auto& off = offsets[k];
      const Vec2 disp{off[0] * g.spacing(), off[1] * g.spacing()};
      const Vec2 mid = wrap_point(g, x + 0.5 * disp);
      const Vec2 vel = (1.0 / tau) * disp;
      const double value = l(mid, vel);
      if (!std::isfinite(value) && failures[i].empty()) {
        failures[i] = "non-finite Lagrangian at x=" + detail::describe(mid, g.dim()) +
                      ", v=" + detail::describe(vel, g.dim());
      }
      edges[i * width + k] = {static_cast<int>(i), g.shift(static_cast<int>(i), off[0], off[1]), tau * value};
    }
  });
  for (const auto& f : failures)
    if (!f.empty()) throw NumericalError("build_kernel: " + f);
  ActionKernel k;
  k.grid = g;
  k.tau = tau;
  k.stencil_radius = stencil_radius;
  k.graph = CostGraph(points, std::move(edges));
  return k;
}

inline ActionKernel build_kernel(const Lagrangian& l, const GridTorus& g) {
  const double tau = default_tau(g);
  return build_kernel(l, g, tau, default_stencil_radius(g, tau));
}

// ---------------------------------------------------------------------------
// Min-plus products.

/// out(x) = min_y u(y) + cost[y][x].
inline std::vector<double> minplus_apply(const ActionKernel& k, std::span<const double> u) {
  const int n = k.point_count();
  if (u.size() != static_cast<std::size_t>(n)) throw DomainError("minplus_apply: size mismatch");
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t x) {
    auto src = k.graph.in_sources(static_cast<int>(x));
    auto cst = k.graph.in_costs(static_cast<int>(x));
    double best = kUnreachable;
    for (std::size_t e = 0; e < src.size(); ++e) best = std::min(best, sat_add(u[src[e]], cst[e]));
    out[x] = best;
  });
  return out;
}

/// out(x) = max_y u(y) - cost[x][y].
inline std::vector<double> maxminus_apply(const ActionKernel& k, std::span<const double> u) {
  const int n = k.point_count();
  if (u.size() != static_cast<std::size_t>(n)) throw DomainError("maxminus_apply: size mismatch");
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t x) {
    auto dst = k.graph.out_targets(static_cast<int>(x));
    auto cst = k.graph.out_costs(static_cast<int>(x));
    double best = -kUnreachable;
    for (std::size_t e = 0; e < dst.size(); ++e) best = std::max(best, u[dst[e]] - cst[e]);
    out[x] = best;
  });
  return out;
}

namespace detail {

/// row_out[z] = min_y row_in[y] + cost[y][z] + shift.
inline void row_times_kernel(const CostGraph& g, double shift, std::span<const double> row_in,
                             std::span<double> row_out) {
  for (int z = 0; z < g.nodes(); ++z) {
    auto src = g.in_sources(z);
    auto cst = g.in_costs(z);
    double best = kUnreachable;
    for (std::size_t e = 0; e < src.size(); ++e) best = std::min(best, sat_add(row_in[src[e]], cst[e] + shift));
    row_out[z] = best;
  }
}

}  // namespace detail

/// Elementwise min over n in [n_min, n_max] of the n-fold min-plus power of
/// (cost + shift). Unreachable entries stay +inf; see unreachable_count().
inline SemiMetric minplus_power_min(const ActionKernel& k, double shift, int n_min, int n_max) {
  if (n_min < 1 || n_max < n_min) throw DomainError("minplus_power_min: need 1 <= n_min <= n_max");
  const int n = k.point_count();
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  SemiMetric result(ids);
  parallel_for(n, [&](std::size_t x) {
    std::vector<double> cur(n, kUnreachable), next(n);
    auto dst = k.graph.out_targets(static_cast<int>(x));
    auto cst = k.graph.out_costs(static_cast<int>(x));
    for (std::size_t e = 0; e < dst.size(); ++e) cur[dst[e]] = cst[e] + shift;
    double* out = result.values.data() + x * n;
    for (int power = 1; power <= n_max; ++power) {
      if (power > 1) {
        detail::row_times_kernel(k.graph, shift, cur, next);
        cur.swap(next);
      }
      if (power >= n_min)
        for (int z = 0; z < n; ++z) out[z] = std::min(out[z], cur[z]);
    }
  });
  return result;
}

/// min over all n >= 1 of (cost + shift)^n, iterated until the running min is
/// stable. Requires no negative cycles; gives up after point_count + 1 powers.
inline SemiMetric minplus_kleene_plus(const ActionKernel& k, double shift) {
  const int n = k.point_count();
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  SemiMetric result(ids);
  std::vector<char> stable(n, 0);
  parallel_for(n, [&](std::size_t x) {
    std::vector<double> cur(n, kUnreachable), next(n);
    auto dst = k.graph.out_targets(static_cast<int>(x));
    auto cst = k.graph.out_costs(static_cast<int>(x));
    for (std::size_t e = 0; e < dst.size(); ++e) cur[dst[e]] = cst[e] + shift;
    double* out = result.values.data() + x * n;
    for (int z = 0; z < n; ++z) out[z] = cur[z];
    for (int power = 2; power <= n + 1; ++power) {
      detail::row_times_kernel(k.graph, shift, cur, next);
      cur.swap(next);
      bool changed = false;
      for (int z = 0; z < n; ++z) {
        if (cur[z] < out[z]) {
          out[z] = cur[z];
          changed = true;
        }
      }
      if (!changed) {
        stable[x] = 1;
        break;
      }
    }
  });
  for (char s : stable)
    if (!s) throw NumericalError("minplus_kleene_plus: no fixed point (negative cycle under this shift)");
  return result;
}

}  // namespace weakkam
