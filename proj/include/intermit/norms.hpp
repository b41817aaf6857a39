#pragma once

// Total variation, the quasi-Hölder oscillation seminorm, and an empirical
// Lasota-Yorke probe for discretized induced operators.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <vector>

#include <json.hpp>

#include "intermit/error.hpp"
#include "intermit/grid.hpp"
#include "intermit/induced_system.hpp"
#include "intermit/ulam.hpp"
#include "intermit/validation.hpp"

namespace intermit {

/// Variation of a step function: sum of jumps between adjacent cells.
inline double variation(const GridFunction& f) {
  double v = 0.0;
  for (std::size_t k = 1; k < f.size(); ++k) v += std::abs(f.values[k] - f.values[k - 1]);
  return v;
}

struct SeminormParams {
  double alpha = 0.5;
  double eps0 = 0.1;
  std::vector<double> eps_grid;  // empty: eps0 / 2^k down to the grid resolution
  bool normalize = false;
};

namespace detail {

inline std::vector<double> probe_radii(const Grid& g, const SeminormParams& p) {
  double wmax = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) wmax = std::max(wmax, g.width(k));
  std::vector<double> eps = p.eps_grid;
  if (eps.empty()) {
    for (double e = p.eps0; e >= wmax && eps.size() < 64; e *= 0.5) eps.push_back(e);
    if (eps.empty()) eps.push_back(p.eps0);
  }
  std::sort(eps.begin(), eps.end());
  for (double e : eps) {
    if (!(e > 0.0) || e > p.eps0 * (1.0 + 1e-12)) throw DomainError("osc_seminorm: probe radii must lie in (0, eps0]");
    if (e < wmax * (1.0 - 1e-12))
      throw ResolutionError("osc_seminorm: probe radius " + std::to_string(e) + " is below the cell width " +
                            std::to_string(wmax));
  }
  return eps;
}

// sum_k osc(f, cells with centers within eps of center_k) * width_k, via monotone deques.
inline double integrated_oscillation(const GridFunction& f, double eps) {
  const Grid& g = f.grid;
  const std::size_t N = g.size();
  std::deque<std::size_t> mx, mn;
  std::size_t lo = 0, hi = 0;  // window [lo, hi)
  double total = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const double c = g.center(k);
    while (hi < N && g.center(hi) <= c + eps) {
      while (!mx.empty() && f.values[mx.back()] <= f.values[hi]) mx.pop_back();
      mx.push_back(hi);
      while (!mn.empty() && f.values[mn.back()] >= f.values[hi]) mn.pop_back();
      mn.push_back(hi);
      ++hi;
    }
    while (g.center(lo) < c - eps) ++lo;
    while (mx.front() < lo) mx.pop_front();
    while (mn.front() < lo) mn.pop_front();
    total += (f.values[mx.front()] - f.values[mn.front()]) * g.width(k);
  }
  return total;
}

}  // namespace detail

/// max over probe radii of eps^{-alpha} * integrated oscillation over eps-balls.
inline double osc_seminorm(const GridFunction& f, const SeminormParams& p) {
  if (!(p.alpha > 0.0 && p.alpha <= 1.0)) throw DomainError("osc_seminorm: alpha must lie in (0, 1]");
  const auto eps = detail::probe_radii(f.grid, p);
  double best = 0.0;
  for (double e : eps) best = std::max(best, std::pow(e, -p.alpha) * detail::integrated_oscillation(f, e));
  return p.normalize ? best / f.grid.length() : best;
}

struct LYNorm {
  enum class Kind { bv, quasi_holder } kind = Kind::bv;
  SeminormParams params;

  double seminorm(const GridFunction& f) const {
    return kind == Kind::bv ? variation(f) : osc_seminorm(f, params);
  }
};

struct LYViolation {
  std::size_t trial = 0;
  double ratio = 0.0;
};

struct LYReport {
  double eta_theory = 0.0;  // 2 / Delta
  double D_theory = 0.0;    // 2 C + 2 / c
  double slack = 1.1;
  double eta_hat = 0.0;     // smallest eta with D = D_theory and no violation
  double D_hat = 0.0;       // smallest D given eta_hat
  double worst_ratio = 0.0;  // max of |Pf| / (eta |f| + D ||f||_1) over trials
  std::size_t trials = 0;
  std::vector<LYViolation> violations;
};

inline void to_json(nlohmann::json& j, const LYReport& r) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : r.violations) v.push_back({{"trial", x.trial}, {"ratio", x.ratio}});
  j = nlohmann::json{{"eta_theory", r.eta_theory}, {"D_theory", r.D_theory}, {"slack", r.slack},
                     {"eta_hat", r.eta_hat},       {"D_hat", r.D_hat},       {"worst_ratio", r.worst_ratio},
                     {"trials", r.trials},         {"violations", v}};
}

/// Random step function on the grid with at most max_jumps jumps and values in [-1, 1],
/// stored as exact cell averages.
inline GridFunction random_step_function(const Grid& g, std::mt19937_64& rng, std::size_t max_jumps = 20) {
  std::uniform_int_distribution<std::size_t> J(0, max_jumps);
  std::uniform_real_distribution<double> X(g.lo(), g.hi()), V(-1.0, 1.0);
  const std::size_t nj = J(rng);
  std::vector<double> xs(nj);
  for (auto& x : xs) x = X(rng);
  std::sort(xs.begin(), xs.end());
  std::vector<double> vals(nj + 1);
  for (auto& v : vals) v = V(rng);
  GridFunction f(g, 0.0);
  // piece p covers [xs[p-1], xs[p]]
  std::size_t p = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double a = g.cell_lo(k), b = g.cell_hi(k);
    while (p < nj && xs[p] <= a) ++p;
    double acc = 0.0, left = a;
    std::size_t q = p;
    while (q < nj && xs[q] < b) {
      acc += vals[q] * (xs[q] - left);
      left = xs[q];
      ++q;
    }
    acc += vals[q] * (b - left);
    f.values[k] = acc / (b - a);
  }
  return f;
}

struct LYPoint {
  double seminorm = 0.0;       // |f|
  double l1 = 0.0;             // ||f||_1, normalized
  double image_seminorm = 0.0;  // |P f|
  double ratio = 0.0;           // |P f| / (eta |f| + D ||f||_1), 0 when both sides vanish
};

inline LYPoint ly_ratio(const UlamOperator& op, const GridFunction& f, double eta, double D, const LYNorm& norm) {
  LYPoint p{norm.seminorm(f), l1_norm(f), norm.seminorm(op.apply(f)), 0.0};
  const double rhs = eta * p.seminorm + D * p.l1;
  if (rhs > 0.0)
    p.ratio = p.image_seminorm / rhs;
  else if (p.image_seminorm > 0.0)
    p.ratio = std::numeric_limits<double>::infinity();
  return p;
}

/// Checks |P f| <= eta |f| + D ||f||_1 (normalized L1) on random step functions.
inline LYReport ly_probe(const UlamOperator& op, double eta, double D, const LYNorm& norm, std::size_t trials,
                         std::uint64_t seed, double slack = 1.1) {
  LYReport r;
  r.eta_theory = eta;
  r.D_theory = D;
  r.slack = slack;
  r.trials = trials;
  std::vector<LYPoint> pts;
  pts.reserve(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    std::seed_seq sq{seed, static_cast<std::uint64_t>(t)};
    std::mt19937_64 rng(sq);
    const LYPoint p = ly_ratio(op, random_step_function(op.grid, rng), eta, D, norm);
    pts.push_back(p);
    r.worst_ratio = std::max(r.worst_ratio, p.ratio);
    if (p.ratio > slack) r.violations.push_back({t, p.ratio});
  }
  for (const auto& p : pts)
    if (p.seminorm > 0.0) r.eta_hat = std::max(r.eta_hat, (p.image_seminorm - D * p.l1) / p.seminorm);
  for (const auto& p : pts)
    if (p.l1 > 0.0) r.D_hat = std::max(r.D_hat, (p.image_seminorm - r.eta_hat * p.seminorm) / p.l1);
  return r;
}

struct LYTheory {
  double eta = 0.0;
  double D = 0.0;
};

/// eta = 2 / Delta, D = 2 C + 2 / c with C the distortion and c the smallest normalized image length.
inline LYTheory ly_theory(const InducedSystem& ind) {
  const double delta = expansion_bound(ind.map, ind.z);
  return {2.0 / delta, 2.0 * ind.distortion + 2.0 / ind.min_image_length};
}

inline LYReport ly_probe(const UlamOperator& op, const InducedSystem& ind, const LYNorm& norm, std::size_t trials,
                         std::uint64_t seed) {
  const auto th = ly_theory(ind);
  return ly_probe(op, th.eta, th.D, norm, trials, seed);
}

/// Lower bound for the operator norm of R_n in |f|_BV + ||f||_1, probed on the constant
/// function and random step functions.
inline double rn_bv_proxy_norm(const UlamOperator& op, const SparseMatrix& Rn, std::size_t trials, std::uint64_t seed) {
  auto strong = [](const GridFunction& f) { return variation(f) + l1_norm(f); };
  auto apply = [&](const GridFunction& f) { return op.from_mass(Rn.transpose() * op.to_mass(f)); };
  double best = 0.0;
  const GridFunction one(op.grid, 1.0);
  best = strong(apply(one)) / strong(one);
  std::mt19937_64 rng(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const GridFunction f = random_step_function(op.grid, rng);
    const double s = strong(f);
    if (s > 0.0) best = std::max(best, strong(apply(f)) / s);
  }
  return best;
}

}  // namespace intermit
