#pragma once

// Discrete critical value (min-plus eigenvalue of the action kernel), the two
// Lax-Oleinik operators, weak KAM solutions by damped value iteration, and the
// domination check u(y) - u(x) <= A_tau(x,y) + c tau.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "weakkam/core.hpp"
#include "weakkam/kernel.hpp"

namespace weakkam {

struct CriticalValue {
  double c = 0.0;
  /// Mean weight of the witness cycle: -c * tau.
  double mean_cycle_weight = 0.0;
  /// Closed walk x0 -> x1 -> ... -> x_{m-1} -> x0 (first node not repeated).
  std::vector<int> witness_cycle;
};

namespace detail {

inline double cycle_weight(const CostGraph& g, std::span<const int> cycle) {
  double total = 0.0;
  for (std::size_t k = 0; k < cycle.size(); ++k) total += g.cost(cycle[k], cycle[(k + 1) % cycle.size()]);
  return total;
}

/// Splits a walk into the simple cycles it closes, in order of closure.
inline std::vector<std::vector<int>> simple_cycles_of_walk(const std::vector<int>& walk) {
  std::vector<std::vector<int>> cycles;
  std::vector<int> path;
  std::unordered_map<int, std::size_t> pos;
  for (int node : walk) {
    auto it = pos.find(node);
    if (it != pos.end()) {
      const std::size_t start = it->second;
      cycles.emplace_back(path.begin() + start, path.end());
      for (std::size_t k = start + 1; k < path.size(); ++k) pos.erase(path[k]);
      path.resize(start + 1);
    } else {
      pos[node] = path.size();
      path.push_back(node);
    }
  }
  return cycles;
}

}  // namespace detail

/// Minimum mean cycle by Karp's recurrence (all nodes as sources), witness
/// reconstructed from the level-n back-walk. c = -(min mean) / tau.
inline CriticalValue critical_value(const ActionKernel& k) {
  const CostGraph& g = k.graph;
  const int n = g.nodes();
  if (n == 0) throw DomainError("critical_value: empty kernel");
  std::vector<int> stranded;
  for (int i = 0; i < n; ++i)
    if (g.out_targets(i).empty()) stranded.push_back(i);
  if (!stranded.empty()) {
    std::string list;
    for (std::size_t s = 0; s < stranded.size() && s < 32; ++s) list += (s ? "," : "") + std::to_string(stranded[s]);
    if (stranded.size() > 32) list += ",...";
    throw NumericalError("critical_value: rows without finite entries (stranded indices " + list + ")");
  }

  const std::size_t stride = static_cast<std::size_t>(n);
  std::vector<double> dist((stride + 1) * stride, kUnreachable);
  std::vector<int> parent((stride + 1) * stride, -1);
  std::fill(dist.begin(), dist.begin() + n, 0.0);
  for (int level = 1; level <= n; ++level) {
    const double* prev = dist.data() + (level - 1) * stride;
    double* cur = dist.data() + level * stride;
    int* par = parent.data() + level * stride;
    parallel_for(n, [&](std::size_t v) {
      auto src = g.in_sources(static_cast<int>(v));
      auto cst = g.in_costs(static_cast<int>(v));
      double best = kUnreachable;
      int arg = -1;
      for (std::size_t e = 0; e < src.size(); ++e) {
        const double cand = sat_add(prev[src[e]], cst[e]);
        if (cand < best) {
          best = cand;
          arg = src[e];
        }
      }
      cur[v] = best;
      par[v] = arg;
    });
  }

  double best_mean = kUnreachable;
  int best_node = -1;
  const double* last = dist.data() + n * stride;
  for (int v = 0; v < n; ++v) {
    if (!is_reachable(last[v])) continue;
    double worst = -kUnreachable;
    for (int level = 0; level < n; ++level) {
      const double dk = dist[level * stride + v];
      if (!is_reachable(dk)) continue;
      worst = std::max(worst, (last[v] - dk) / (n - level));
    }
    if (worst < best_mean) {
      best_mean = worst;
      best_node = v;
    }
  }
  if (best_node < 0) throw NumericalError("critical_value: kernel graph has no cycle");

  std::vector<int> walk(n + 1);
  walk[n] = best_node;
  for (int level = n; level >= 1; --level) walk[level - 1] = parent[level * stride + walk[level]];

  CriticalValue out;
  double witness_mean = kUnreachable;
  for (auto& cycle : detail::simple_cycles_of_walk(walk)) {
    const double mean = detail::cycle_weight(g, cycle) / static_cast<double>(cycle.size());
    if (mean < witness_mean) {
      witness_mean = mean;
      out.witness_cycle = std::move(cycle);
    }
  }
  if (out.witness_cycle.empty()) throw NumericalError("critical_value: no cycle on the critical walk");
  out.mean_cycle_weight = witness_mean;
  out.c = -witness_mean / k.tau;
  return out;
}

// ---------------------------------------------------------------------------
// Lax-Oleinik operators on one kernel step.

/// T^- u(x) = min_y u(y) + A(y, x).
inline std::vector<double> lax_oleinik_minus(const ActionKernel& k, std::span<const double> u) {
  return minplus_apply(k, u);
}

/// T^+ u(x) = max_y u(y) - A(x, y).
inline std::vector<double> lax_oleinik_plus(const ActionKernel& k, std::span<const double> u) {
  return maxminus_apply(k, u);
}

/// T^- u + c tau: fixed points are weak KAM solutions.
inline std::vector<double> shifted_minus(const ActionKernel& k, std::span<const double> u, double c) {
  auto out = minplus_apply(k, u);
  for (auto& v : out) v += c * k.tau;
  return out;
}

/// T^+ u - c tau.
inline std::vector<double> shifted_plus(const ActionKernel& k, std::span<const double> u, double c) {
  auto out = maxminus_apply(k, u);
  for (auto& v : out) v -= c * k.tau;
  return out;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline void normalize_min_zero(std::vector<double>& u) {
  const double m = *std::min_element(u.begin(), u.end());
  for (auto& v : u) v -= m;
}

// ---------------------------------------------------------------------------
// Weak KAM solutions.

struct WeakKamSolution {
  ValueFunction u;
  double residual = 0.0;
  int iterations = 0;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : NumericalError(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

struct WeakKamOptions {
  double tol = 1e-9;
  /// <= 0 selects 50 * point_count.
  int max_iter = 0;
};

/// Value iteration u <- T^- u + c tau. Besides the plain iterate, the
/// elementwise min over windows [2^j, 2^{j+1}) of iterates is tested as a
/// candidate, which absorbs periodic behaviour on the critical cycles.
/// The result is normalized to min u = 0.
inline WeakKamSolution weak_kam_solution(const ActionKernel& k, double c, const ValueFunction& u0,
                                         const WeakKamOptions& opt = {}) {
  const int n = k.point_count();
  if (u0.values.size() != static_cast<std::size_t>(n)) throw DomainError("weak_kam_solution: size mismatch");
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : 50 * n;
  const GridTorus& grid = u0.grid;

  auto residual_of = [&](std::vector<double>& cand) {
    normalize_min_zero(cand);
    return sup_distance(shifted_minus(k, cand, c), cand);
  };

  std::vector<double> u = u0.values;
  std::vector<double> window_min(n, kUnreachable);
  long window_end = 2;
  double best = kUnreachable;
  for (int it = 1; it <= max_iter; ++it) {
    auto next = shifted_minus(k, u, c);
    const double r = sup_distance(next, u);
    best = std::min(best, r);
    if (r <= opt.tol) {
      normalize_min_zero(u);
      return {ValueFunction(grid, std::move(u)), r, it};
    }
    u.swap(next);
    for (int i = 0; i < n; ++i) window_min[i] = std::min(window_min[i], u[i]);
    if (it + 1 == window_end) {
      const double rw = residual_of(window_min);
      best = std::min(best, rw);
      if (rw <= opt.tol) return {ValueFunction(grid, std::move(window_min)), rw, it};
      std::fill(window_min.begin(), window_min.end(), kUnreachable);
      window_end *= 2;
    }
  }
  throw ConvergenceError("weak_kam_solution: no fixed point within " + std::to_string(max_iter) +
                             " iterations (best residual " + std::to_string(best) + ")",
                         best);
}

// ---------------------------------------------------------------------------

struct DominationReport {
  /// max over edges (x,y) of u(y) - u(x) - A(x,y) - c tau. <= 0: dominated.
  double max_violation = -kUnreachable;
  int from = -1;
  int to = -1;
};

inline DominationReport check_dominated(std::span<const double> u, const ActionKernel& k, double c) {
  if (u.size() != static_cast<std::size_t>(k.point_count())) throw DomainError("check_dominated: size mismatch");
  DominationReport r;
  const double shift = c * k.tau;
  for (int x = 0; x < k.point_count(); ++x) {
    auto dst = k.graph.out_targets(x);
    auto cst = k.graph.out_costs(x);
    for (std::size_t e = 0; e < dst.size(); ++e) {
      const double v = u[dst[e]] - u[x] - cst[e] - shift;
      if (v > r.max_violation) {
        r.max_violation = v;
        r.from = x;
        r.to = dst[e];
      }
    }
  }
  return r;
}

inline DominationReport check_dominated(const ValueFunction& u, const ActionKernel& k, double c) {
  return check_dominated(std::span<const double>(u.values), k, c);
}

}  // namespace weakkam
