#pragma once

// Alternating Lax-Oleinik smoothing v = T^-_{t_N} T^+_{t_N} ... T^-_{t_1} T^+_{t_1} u
// of a dominated function, with discrete semiconvexity / semiconcavity
// constants and the centered-difference subsolution residual.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "weakkam/core.hpp"
#include "weakkam/critical.hpp"
#include "weakkam/kernel.hpp"
#include "weakkam/model.hpp"

namespace weakkam {

struct SmoothingSchedule {
  int stages = 0;
  std::vector<double> t_plus;
  std::vector<double> t_minus;
  double tau = 1.0;

  /// Number of one-step applications for a stage time, at least 1.
  int count(double t) const { return std::max(1, static_cast<int>(std::lround(t / tau))); }

  void validate() const {
    if (stages < 1) throw DomainError("SmoothingSchedule: need at least one stage");
    if (t_plus.size() != static_cast<std::size_t>(stages) || t_minus.size() != static_cast<std::size_t>(stages))
      throw DomainError("SmoothingSchedule: t_plus/t_minus must have one entry per stage");
    if (!(tau > 0.0)) throw DomainError("SmoothingSchedule: tau must be > 0");
    for (int n = 0; n < stages; ++n)
      if (!(t_plus[n] > 0.0) || !(t_minus[n] > 0.0)) throw DomainError("SmoothingSchedule: times must be > 0");
  }
};

/// t+_n = tau * 2^max(0, 3 - n) and t-_n = max(tau, t+_n / 2), n = 1..N.
/// Equal times would make T^-_t T^+_t the identity on any T^- image.
inline SmoothingSchedule default_schedule(int stages, double tau) {
  SmoothingSchedule s;
  s.stages = stages;
  s.tau = tau;
  for (int n = 1; n <= stages; ++n) {
    const double t = std::ldexp(tau, std::max(0, 3 - n));
    s.t_plus.push_back(t);
    s.t_minus.push_back(std::max(tau, 0.5 * t));
  }
  s.validate();
  return s;
}

/// B with |T^+ u - u|, |T^- u - u| <= B tau per shifted step for every dominated u:
/// max over x of the self-loop weight A(x,x) + c tau, divided by tau.
inline double step_drift_bound(const ActionKernel& k, double c) {
  double b = 0.0;
  for (int x = 0; x < k.point_count(); ++x) {
    const double w = k.cost(x, x);
    if (!is_reachable(w)) throw DomainError("step_drift_bound: kernel has no self-loop at " + std::to_string(x));
    b = std::max(b, w + c * k.tau);
  }
  return b / k.tau;
}

/// B * (sum of t+_n + t-_n), counting each stage time as a whole number of steps.
inline double schedule_drift_bound(const SmoothingSchedule& s, const ActionKernel& k, double c) {
  int steps = 0;
  for (int n = 0; n < s.stages; ++n) steps += s.count(s.t_plus[n]) + s.count(s.t_minus[n]);
  return step_drift_bound(k, c) * steps * k.tau;
}

struct SmoothingOptions {
  double tol = 1e-9;
  /// Called after every one-step application with (stage, is_plus, values).
  std::function<void(int, bool, const std::vector<double>&)> observer;
};

/// Each one-step T^+ / T^- is shifted by -/+ c tau so domination is kept; it
/// is re-checked after every application.
inline ValueFunction alternating_smooth(const ValueFunction& u, const ActionKernel& k, double c,
                                        const SmoothingSchedule& schedule, const SmoothingOptions& opt = {}) {
  schedule.validate();
  const auto in = check_dominated(u, k, c);
  if (in.max_violation > opt.tol) {
    throw DomainError("alternating_smooth: input not dominated, violation " + std::to_string(in.max_violation) +
                      " on edge " + std::to_string(in.from) + "->" + std::to_string(in.to));
  }
  std::vector<double> v = u.values;
  auto step = [&](int stage, bool plus) {
    v = plus ? shifted_plus(k, v, c) : shifted_minus(k, v, c);
    const auto d = check_dominated(v, k, c);
    if (d.max_violation > opt.tol) {
      throw NumericalError("alternating_smooth: domination lost at stage " + std::to_string(stage + 1) +
                           ", violation " + std::to_string(d.max_violation));
    }
    if (opt.observer) opt.observer(stage, plus, v);
  };
  for (int n = 0; n < schedule.stages; ++n) {
    for (int r = schedule.count(schedule.t_plus[n]); r > 0; --r) step(n, true);
    for (int r = schedule.count(schedule.t_minus[n]); r > 0; --r) step(n, false);
  }
  return ValueFunction(u.grid, std::move(v));
}

namespace detail {

/// Extreme of sign * second difference / (2 spacing^2) over points and axes.
inline double second_difference_extreme(const ValueFunction& u, double sign) {
  const GridTorus& g = u.grid;
  const double h2 = g.spacing() * g.spacing();
  double worst = 0.0;
  for (int x = 0; x < g.point_count(); ++x) {
    for (int axis = 0; axis < g.dim(); ++axis) {
      const int fwd = axis == 0 ? g.shift(x, 1, 0) : g.shift(x, 0, 1);
      const int bwd = axis == 0 ? g.shift(x, -1, 0) : g.shift(x, 0, -1);
      const double d2 = u.values[fwd] + u.values[bwd] - 2.0 * u.values[x];
      worst = std::max(worst, sign * d2 / (2.0 * h2));
    }
  }
  return worst;
}

}  // namespace detail

/// Smallest K >= 0 with every axis second difference >= -2 K spacing^2.
inline double semiconvexity_constant(const ValueFunction& u) { return detail::second_difference_extreme(u, -1.0); }

/// Smallest K >= 0 with every axis second difference <= 2 K spacing^2.
inline double semiconcavity_constant(const ValueFunction& u) { return detail::second_difference_extreme(u, 1.0); }

/// Centered min-image difference gradient at grid index x.
inline Vec2 centered_gradient(const ValueFunction& u, int x) {
  const GridTorus& g = u.grid;
  const double inv = 0.5 / g.spacing();
  Vec2 p{(u.values[g.shift(x, 1, 0)] - u.values[g.shift(x, -1, 0)]) * inv, 0.0};
  if (g.dim() == 2) p[1] = (u.values[g.shift(x, 0, 1)] - u.values[g.shift(x, 0, -1)]) * inv;
  return p;
}

/// Per-point H(x, Du(x)) - c.
inline std::vector<double> subsolution_residuals(const ValueFunction& u, const Lagrangian& l, double c) {
  const GridTorus& g = u.grid;
  std::vector<double> r(g.point_count());
  parallel_for(r.size(), [&](std::size_t x) {
    r[x] = hamiltonian(l, g.dim(), g.coords(static_cast<int>(x)), centered_gradient(u, static_cast<int>(x))) - c;
  });
  return r;
}

/// max over the grid of H(x, Du(x)) - c.
inline double subsolution_residual(const ValueFunction& u, const Lagrangian& l, double c) {
  const auto r = subsolution_residuals(u, l, c);
  return *std::max_element(r.begin(), r.end());
}

}  // namespace weakkam
