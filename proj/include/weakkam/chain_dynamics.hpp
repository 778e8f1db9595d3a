#pragma once

// Flows of vector fields on the torus, eps-chain graphs, chain-recurrent sets
// and the comparison with the projected Aubry set of the Mane Lagrangian.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <span>
#include <vector>

#include "weakkam/aubry_mather.hpp"
#include "weakkam/core.hpp"
#include "weakkam/critical.hpp"
#include "weakkam/kernel.hpp"
#include "weakkam/model.hpp"
#include "weakkam/torus.hpp"

namespace weakkam {

/// Classical RK4 over `substeps` equal steps, result wrapped to [0,1)^2.
/// Coordinates a field leaves untouched (the second one on T^1) stay put.
inline Vec2 integrate_flow(const VectorField& field, const Vec2& x0, double dt, int substeps) {
  if (!(dt > 0.0)) throw DomainError("integrate_flow: dt must be > 0");
  if (substeps < 1) throw DomainError("integrate_flow: substeps must be >= 1");
  const double h = dt / substeps;
  Vec2 x = x0;
  for (int s = 0; s < substeps; ++s) {
    const Vec2 k1 = field(x);
    const Vec2 k2 = field(x + (0.5 * h) * k1);
    const Vec2 k3 = field(x + (0.5 * h) * k2);
    const Vec2 k4 = field(x + h * k3);
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return {wrap_unit(x[0]), wrap_unit(x[1])};
}

struct ChainOptions {
  double dt = 1.0;
  /// <= 0 selects 1.5 * spacing.
  double eps = 0.0;
  int substeps = 64;
};

struct ChainGraph {
  GridTorus grid;
  double dt;
  double eps;
  /// Edge x -> y when d(flow_dt(x), y) <= eps; the cost is that distance.
  CostGraph edges;
};

inline ChainGraph chain_graph(const VectorField& field, const GridTorus& g, const ChainOptions& opt = {}) {
  const double eps = opt.eps > 0.0 ? opt.eps : 1.5 * g.spacing();
  const double half_diag = 0.5 * g.spacing() * std::sqrt(static_cast<double>(g.dim()));
  if (eps < half_diag * (1.0 - 1e-12))
    throw DomainError("chain_graph: eps must be >= half the cell diagonal (" + std::to_string(half_diag) + ")");
  const int n = g.point_count();
  const int reach = static_cast<int>(std::ceil(eps / g.spacing())) + 1;
  const int reach1 = g.dim() == 2 ? reach : 0;
  const double limit = eps * (1.0 + 1e-12);
  std::vector<std::vector<Edge>> rows(n);
  parallel_for(n, [&](std::size_t i) {
    const Vec2 y = integrate_flow(field, g.coords(static_cast<int>(i)), opt.dt, opt.substeps);
    const int centre = g.nearest(y);
    std::vector<int> seen;
    for (int d1 = -reach1; d1 <= reach1; ++d1) {
      for (int d0 = -reach; d0 <= reach; ++d0) {
        const int z = g.shift(centre, d0, d1);
        const double dist = torus_distance(g, y, g.coords(z));
        if (dist > limit || std::find(seen.begin(), seen.end(), z) != seen.end()) continue;
        seen.push_back(z);
        rows[i].push_back({static_cast<int>(i), z, dist});
      }
    }
  });
  std::vector<Edge> all;
  for (auto& r : rows) all.insert(all.end(), r.begin(), r.end());
  return {g, opt.dt, eps, CostGraph(n, std::move(all))};
}

/// Nodes whose strongly connected component carries at least one edge.
inline std::vector<int> chain_recurrent_set(const ChainGraph& cg) {
  const CostGraph& g = cg.edges;
  int comps = 0;
  const auto comp = detail::strong_components(g, [](int, std::size_t) { return true; }, comps);
  std::vector<char> has_edge(comps, 0);
  for (int x = 0; x < g.nodes(); ++x)
    for (int y : g.out_targets(x))
      if (comp[y] == comp[x]) has_edge[comp[x]] = 1;
  std::vector<int> out;
  for (int x = 0; x < g.nodes(); ++x)
    if (has_edge[comp[x]]) out.push_back(x);
  return out;
}

struct SetComparison {
  double hausdorff_distance = 0.0;
  std::vector<int> a_only;
  std::vector<int> b_only;
};

inline SetComparison compare_sets(std::span<const int> a, std::span<const int> b, const GridTorus& g) {
  if (a.empty() || b.empty()) throw DomainError("compare_aubry_chain: both sets must be nonempty");
  auto directed = [&](std::span<const int> from, std::span<const int> to) {
    std::vector<double> best(from.size());
    parallel_for(from.size(), [&](std::size_t i) {
      double m = kUnreachable;
      for (int y : to) m = std::min(m, grid_distance(g, from[i], y));
      best[i] = m;
    });
    return *std::max_element(best.begin(), best.end());
  };
  SetComparison s;
  s.hausdorff_distance = std::max(directed(a, b), directed(b, a));
  std::vector<int> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::set_difference(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(s.a_only));
  std::set_difference(sb.begin(), sb.end(), sa.begin(), sa.end(), std::back_inserter(s.b_only));
  return s;
}

inline SetComparison compare_aubry_chain(const AubrySet& aubry, std::span<const int> chain, const GridTorus& g) {
  return compare_sets(aubry.indices, chain, g);
}

struct ConstancyReport {
  /// max over pairs (i, j) of max(u_i - u_j) - min(u_i - u_j).
  double max_oscillation = 0.0;
  int first = -1;
  int second = -1;
};

inline ConstancyReport weak_kam_constancy_check(std::span<const WeakKamSolution> solutions) {
  if (solutions.size() < 2) throw DomainError("weak_kam_constancy_check: need at least two solutions");
  ConstancyReport r;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    for (std::size_t j = i + 1; j < solutions.size(); ++j) {
      const auto& a = solutions[i].u.values;
      const auto& b = solutions[j].u.values;
      if (a.size() != b.size()) throw DomainError("weak_kam_constancy_check: grid mismatch");
      double lo = kUnreachable, hi = -kUnreachable;
      for (std::size_t k = 0; k < a.size(); ++k) {
        lo = std::min(lo, a[k] - b[k]);
        hi = std::max(hi, a[k] - b[k]);
      }
      if (hi - lo > r.max_oscillation || r.first < 0) {
        r.max_oscillation = hi - lo;
        r.first = static_cast<int>(i);
        r.second = static_cast<int>(j);
      }
    }
  }
  return r;
}

}  // namespace weakkam
