#pragma once

// Peierls barrier, projected Aubry set, Mather semi-distance and quotient.
//
// With w = A_tau + c tau the kernel graph has no negative cycle. The discrete
// barrier is the liminf of the min-plus powers w^n, which equals
//
//   h(x, y) = min over critical nodes z of S(x, z) + S(z, y),
//
// where S is the shortest-path closure of w including the empty path and the
// critical nodes are those lying on zero-weight cycles. Nodes joined by a
// zero-weight cycle give identical terms, so one representative per critical
// class is enough.

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "weakkam/core.hpp"
#include "weakkam/critical.hpp"
#include "weakkam/kernel.hpp"
#include "weakkam/semimetric.hpp"

namespace weakkam {

namespace detail {

/// Bellman-Ford potential from a virtual source joined to every node with
/// weight 0: phi(y) <= phi(x) + w(x,y) on every edge, up to rounding.
inline std::vector<double> bellman_ford_potential(const CostGraph& g, double shift) {
  const int n = g.nodes();
  std::vector<double> phi(n, 0.0);
  std::deque<int> queue(n);
  std::iota(queue.begin(), queue.end(), 0);
  std::vector<char> queued(n, 1);
  std::vector<int> relax_count(n, 0);
  while (!queue.empty()) {
    const int x = queue.front();
    queue.pop_front();
    queued[x] = 0;
    auto dst = g.out_targets(x);
    auto cst = g.out_costs(x);
    for (std::size_t e = 0; e < dst.size(); ++e) {
      const int y = dst[e];
      const double cand = phi[x] + cst[e] + shift;
      // A few ulps of slack stops rounding-level zero cycles from looping.
      if (cand < phi[y] - 4e-16 * (1.0 + std::abs(phi[y]))) {
        phi[y] = cand;
        if (++relax_count[y] > n + 1)
          throw NumericalError("Peierls barrier: negative cycle under the critical shift (c too large?)");
        if (!queued[y]) {
          queued[y] = 1;
          queue.push_back(y);
        }
      }
    }
  }
  return phi;
}

/// Strongly connected components (iterative Tarjan) of the subgraph selected
/// by keep(edge position in out-row of x). Returns component id per node.
template <typename Keep>
std::vector<int> strong_components(const CostGraph& g, Keep&& keep, int& component_count) {
  const int n = g.nodes();
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1), stack;
  std::vector<char> on_stack(n, 0);
  int counter = 0;
  component_count = 0;
  struct Frame {
    int node;
    std::size_t edge;
  };
  std::vector<Frame> call;
  for (int root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      Frame& f = call.back();
      auto dst = g.out_targets(f.node);
      if (f.edge < dst.size()) {
        const std::size_t e = f.edge++;
        if (!keep(f.node, e)) continue;
        const int y = dst[e];
        if (index[y] < 0) {
          index[y] = low[y] = counter++;
          stack.push_back(y);
          on_stack[y] = 1;
          call.push_back({y, 0});
        } else if (on_stack[y]) {
          low[f.node] = std::min(low[f.node], index[y]);
        }
        continue;
      }
      const int v = f.node;
      call.pop_back();
      if (!call.empty()) low[call.back().node] = std::min(low[call.back().node], low[v]);
      if (low[v] == index[v]) {
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = component_count;
        } while (w != v);
        ++component_count;
      }
    }
  }
  return comp;
}

/// Dijkstra on nonnegative reduced weights, forward (out-edges) or backward
/// (in-edges, i.e. distances *to* the source).
inline std::vector<double> dijkstra_reduced(const CostGraph& g, double shift, std::span<const double> phi,
                                            int source, bool backward) {
  const int n = g.nodes();
  std::vector<double> dist(n, kUnreachable);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[source] = 0.0;
  heap.push({0.0, source});
  while (!heap.empty()) {
    auto [d, x] = heap.top();
    heap.pop();
    if (d > dist[x]) continue;
    auto nbr = backward ? g.in_sources(x) : g.out_targets(x);
    auto cst = backward ? g.in_costs(x) : g.out_costs(x);
    for (std::size_t e = 0; e < nbr.size(); ++e) {
      const int y = nbr[e];
      // Edge y->x when backward, x->y otherwise.
      const double reduced = backward ? cst[e] + shift + phi[y] - phi[x] : cst[e] + shift + phi[x] - phi[y];
      const double cand = d + std::max(0.0, reduced);
      if (cand < dist[y]) {
        dist[y] = cand;
        heap.push({cand, y});
      }
    }
  }
  return dist;
}

}  // namespace detail

/// Barrier data: shortest-path rows S(r, .) and columns S(., r) for one
/// representative r of each critical class.
class PeierlsBarrier {
 public:
  PeierlsBarrier(const ActionKernel& k, double c) : c_(c), tau_(k.tau), points_(k.point_count()) {
    const CostGraph& g = k.graph;
    const int n = points_;
    const double shift = c * k.tau;
    const auto phi = detail::bellman_ford_potential(g, shift);

    double scale = 1.0;
    for (const auto& e : g.edges()) scale = std::max(scale, std::abs(e.cost + shift));
    const double zero_tol = 1e-12 * scale;
    auto reduced = [&](int x, std::size_t e) {
      return g.out_costs(x)[e] + shift + phi[x] - phi[g.out_targets(x)[e]];
    };
    int comps = 0;
    const auto comp = detail::strong_components(g, [&](int x, std::size_t e) { return reduced(x, e) <= zero_tol; },
                                                comps);
    // A component is critical when it carries a near-zero edge internally.
    std::vector<char> has_cycle(comps, 0);
    for (int x = 0; x < n; ++x) {
      auto dst = g.out_targets(x);
      for (std::size_t e = 0; e < dst.size(); ++e)
        if (comp[dst[e]] == comp[x] && reduced(x, e) <= zero_tol) has_cycle[comp[x]] = 1;
    }
    std::vector<int> rep_of_comp(comps, -1);
    critical_.assign(n, 0);
    for (int x = 0; x < n; ++x) {
      if (!has_cycle[comp[x]]) continue;
      critical_[x] = 1;
      if (rep_of_comp[comp[x]] < 0) {
        rep_of_comp[comp[x]] = x;
        reps_.push_back(x);
      }
    }
    if (reps_.empty()) throw NumericalError("Peierls barrier: no zero-weight cycle at this c (is c critical?)");

    const std::size_t m = reps_.size();
    rows_.assign(m * n, kUnreachable);
    cols_.assign(m * n, kUnreachable);
    parallel_for(m, [&](std::size_t r) {
      const int z = reps_[r];
      auto fwd = detail::dijkstra_reduced(g, shift, phi, z, false);
      auto bwd = detail::dijkstra_reduced(g, shift, phi, z, true);
      for (int y = 0; y < n; ++y) {
        rows_[r * n + y] = is_reachable(fwd[y]) ? fwd[y] - phi[z] + phi[y] : kUnreachable;
        cols_[r * n + y] = is_reachable(bwd[y]) ? bwd[y] - phi[y] + phi[z] : kUnreachable;
      }
    });
    for (double v : rows_)
      if (!is_reachable(v)) throw NumericalError("Peierls barrier: kernel graph is not strongly connected");
    for (double v : cols_)
      if (!is_reachable(v)) throw NumericalError("Peierls barrier: kernel graph is not strongly connected");
  }

  int point_count() const { return points_; }
  double c() const { return c_; }
  double tau() const { return tau_; }
  bool is_critical(int x) const { return critical_[x] != 0; }
  const std::vector<int>& class_representatives() const { return reps_; }

  double operator()(int x, int y) const {
    double best = kUnreachable;
    for (std::size_t r = 0; r < reps_.size(); ++r)
      best = std::min(best, cols_[r * points_ + x] + rows_[r * points_ + y]);
    return best;
  }

  /// y -> h(x, y) over the whole grid.
  std::vector<double> row(int x) const {
    std::vector<double> out(points_, kUnreachable);
    for (std::size_t r = 0; r < reps_.size(); ++r) {
      const double a = cols_[r * points_ + x];
      const double* s = rows_.data() + r * points_;
      for (int y = 0; y < points_; ++y) out[y] = std::min(out[y], a + s[y]);
    }
    return out;
  }

  /// x -> h(x, y) over the whole grid.
  std::vector<double> column(int y) const {
    std::vector<double> out(points_, kUnreachable);
    for (std::size_t r = 0; r < reps_.size(); ++r) {
      const double b = rows_[r * points_ + y];
      const double* s = cols_.data() + r * points_;
      for (int x = 0; x < points_; ++x) out[x] = std::min(out[x], s[x] + b);
    }
    return out;
  }

  std::vector<double> diagonal() const {
    std::vector<double> out(points_);
    for (int x = 0; x < points_; ++x) out[x] = (*this)(x, x);
    return out;
  }

  SemiMetric restricted(std::vector<int> ids) const {
    SemiMetric h(std::move(ids));
    const std::size_t n = h.size();
    parallel_for(n, [&](std::size_t i) {
      for (std::size_t j = 0; j < n; ++j) h.at(i, j) = (*this)(h.point_ids[i], h.point_ids[j]);
    });
    return h;
  }

  SemiMetric dense() const {
    std::vector<int> ids(points_);
    std::iota(ids.begin(), ids.end(), 0);
    return restricted(std::move(ids));
  }

 private:
  double c_;
  double tau_;
  int points_;
  std::vector<char> critical_;
  std::vector<int> reps_;
  std::vector<double> rows_;
  std::vector<double> cols_;
};

/// Full asymmetric barrier matrix h over every grid point.
inline SemiMetric peierls_barrier(const ActionKernel& k, double c) { return PeierlsBarrier(k, c).dense(); }

// ---------------------------------------------------------------------------
// Aubry set.

enum class AubryLabel { stationary, periodic, other };

inline const char* to_string(AubryLabel l) {
  switch (l) {
    case AubryLabel::stationary:
      return "stationary";
    case AubryLabel::periodic:
      return "periodic";
    default:
      return "other";
  }
}

struct AubrySet {
  std::vector<int> indices;
  std::vector<double> self_barrier;
  std::vector<AubryLabel> labels;
  /// Minimizing one-step successor of each index.
  std::vector<int> successors;
  double threshold = 0.0;

  bool contains(int x) const { return std::binary_search(indices.begin(), indices.end(), x); }
};

inline constexpr double kDefaultAubryEta = 1e-9;

/// y*(x) = argmin_y A(x,y) + c tau + h(y,x); ties prefer x itself, then the
/// smallest index.
inline int minimizing_successor(const ActionKernel& k, const PeierlsBarrier& h, int x) {
  const double shift = h.c() * k.tau;
  auto dst = k.graph.out_targets(x);
  auto cst = k.graph.out_costs(x);
  std::vector<double> score(dst.size());
  double best = kUnreachable;
  for (std::size_t e = 0; e < dst.size(); ++e) {
    score[e] = cst[e] + shift + h(dst[e], x);
    best = std::min(best, score[e]);
  }
  const double tol = 1e-12 * (1.0 + std::abs(best));
  int pick = -1;
  for (std::size_t e = 0; e < dst.size(); ++e) {
    if (score[e] > best + tol) continue;
    if (dst[e] == x) return x;
    if (pick < 0) pick = dst[e];
  }
  return pick;
}

struct Classification {
  std::vector<AubryLabel> labels;
  std::vector<int> successors;
};

/// stationary: y*(x) = x. periodic: iterating y* returns to x within
/// point_count steps through distinct cells. other: anything else.
inline Classification classify_aubry(const ActionKernel& k, const PeierlsBarrier& h, std::span<const int> indices) {
  Classification out;
  out.labels.resize(indices.size());
  out.successors.resize(indices.size());
  std::vector<int> succ_cache(k.point_count(), -2);
  auto succ = [&](int x) {
    if (succ_cache[x] == -2) succ_cache[x] = minimizing_successor(k, h, x);
    return succ_cache[x];
  };
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int x = indices[i];
    const int first = succ(x);
    out.successors[i] = first;
    if (first == x) {
      out.labels[i] = AubryLabel::stationary;
      continue;
    }
    std::vector<char> seen(k.point_count(), 0);
    seen[x] = 1;
    int cur = first;
    AubryLabel label = AubryLabel::other;
    for (int step = 0; step < k.point_count(); ++step) {
      if (cur == x) {
        label = AubryLabel::periodic;
        break;
      }
      if (cur < 0 || seen[cur]) break;
      seen[cur] = 1;
      cur = succ(cur);
    }
    out.labels[i] = label;
  }
  return out;
}

inline AubrySet aubry_set(const PeierlsBarrier& h, double eta, const ActionKernel& k) {
  if (!(eta >= 0.0)) throw DomainError("aubry_set: eta must be >= 0");
  AubrySet a;
  a.threshold = eta;
  const auto diag = h.diagonal();
  for (int x = 0; x < h.point_count(); ++x) {
    if (diag[x] <= eta) {
      a.indices.push_back(x);
      a.self_barrier.push_back(diag[x]);
    }
  }
  if (a.indices.empty()) {
    throw NumericalError("aubry_set: no grid point with h(x,x) <= eta; increase eta or refine the grid "
                         "(the continuous Aubry set is never empty)");
  }
  auto cls = classify_aubry(k, h, a.indices);
  a.labels = std::move(cls.labels);
  a.successors = std::move(cls.successors);
  return a;
}

// ---------------------------------------------------------------------------
// Mather semi-distance and quotient.

inline SemiMetric mather_delta(const SemiMetric& h) {
  SemiMetric d(h.point_ids, true);
  const std::size_t n = h.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d.at(i, j) = h.at(i, j) + h.at(j, i);
  return d;
}

struct QuotientPartition {
  /// Sorted member lists, ordered by smallest member.
  std::vector<std::vector<int>> classes;
  std::vector<int> representative;
  double merge_threshold = 0.0;

  std::size_t class_count() const { return classes.size(); }
  int class_of(int x) const {
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (std::binary_search(classes[c].begin(), classes[c].end(), x)) return static_cast<int>(c);
    return -1;
  }
};

/// 2 spacing^2 / tau: twice the delta_M of two adjacent cells joined by
/// single-cell moves.
inline double default_merge_threshold(const GridTorus& g, double tau) {
  return 2.0 * g.spacing() * g.spacing() / tau;
}

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace detail

inline QuotientPartition quotient(const SemiMetric& delta, const AubrySet& a, double merge_threshold) {
  if (delta.max_asymmetry() > 1e-12 * (1.0 + merge_threshold))
    throw DomainError("quotient: delta must be symmetric");
  std::vector<int> pos(a.indices.size());
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    pos[i] = delta.position(a.indices[i]);
    if (pos[i] < 0) throw DomainError("quotient: delta does not cover Aubry index " + std::to_string(a.indices[i]));
  }
  detail::UnionFind uf(a.indices.size());
  for (std::size_t i = 0; i < a.indices.size(); ++i)
    for (std::size_t j = i + 1; j < a.indices.size(); ++j)
      if (delta.at(pos[i], pos[j]) <= merge_threshold) uf.unite(static_cast<int>(i), static_cast<int>(j));
  QuotientPartition q;
  q.merge_threshold = merge_threshold;
  std::vector<int> slot(a.indices.size(), -1);
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    const int root = uf.find(static_cast<int>(i));
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(q.classes.size());
      q.classes.emplace_back();
      q.representative.push_back(a.indices[i]);
    }
    q.classes[slot[root]].push_back(a.indices[i]);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Representation formula on Aubry pairs.

struct RepresentationReport {
  double max_residual = 0.0;
  int x = -1;
  int y = -1;
};

/// For Aubry x, y with u1 = h(x, .), u2 = h(y, .):
///   r(x,y) = delta(x,y) - [(u1 - u2)(y) - (u1 - u2)(x)].
/// h must cover every Aubry index.
inline RepresentationReport representation_check(const SemiMetric& h, const AubrySet& a) {
  RepresentationReport rep;
  std::vector<int> pos(a.indices.size());
  for (std::size_t i = 0; i < a.indices.size(); ++i) {
    pos[i] = h.position(a.indices[i]);
    if (pos[i] < 0) throw DomainError("representation_check: h does not cover the Aubry set");
  }
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = 0; j < pos.size(); ++j) {
      const int x = pos[i], y = pos[j];
      const double delta = h.at(x, y) + h.at(y, x);
      const double u1y = h.at(x, y), u1x = h.at(x, x);
      const double u2y = h.at(y, y), u2x = h.at(y, x);
      const double r = std::abs(delta - ((u1y - u2y) - (u1x - u2x)));
      if (r > rep.max_residual) {
        rep.max_residual = r;
        rep.x = a.indices[i];
        rep.y = a.indices[j];
      }
    }
  }
  return rep;
}

/// max over Aubry pairs of (u1 - u2)(y) - (u1 - u2)(x) - delta(x, y) for two
/// arbitrary subsolutions given on the full grid; <= 0 up to rounding.
inline double representation_bound_violation(const SemiMetric& delta, const AubrySet& a, std::span<const double> u1,
                                             std::span<const double> u2) {
  double worst = -kUnreachable;
  for (int x : a.indices) {
    const int px = delta.position(x);
    for (int y : a.indices) {
      const int py = delta.position(y);
      if (px < 0 || py < 0) throw DomainError("representation_bound_violation: delta does not cover the Aubry set");
      worst = std::max(worst, (u1[y] - u2[y]) - (u1[x] - u2[x]) - delta.at(px, py));
    }
  }
  return worst;
}

}  // namespace weakkam
