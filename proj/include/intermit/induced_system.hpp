#pragma once

// First-return map on Xhat = [z, 1].
//
// Points of a non-cusp branch whose image falls into J = [0, z) drift up the
// cusp branch through the pullback bands [z_i, z_{i-1}) before escaping; the
// cell of such points is T_j^{-1}[z_i, z_{i-1}) with return time i + 1. Bands
// below z_{n_max} are not resolved and are kept as explicit slivers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "intermit/error.hpp"
#include "intermit/grid.hpp"
#include "intermit/map_models.hpp"

namespace intermit {

struct Cell {
  std::size_t j = 0;    // branch index (0 = cusp branch)
  std::size_t i = 0;    // number of steps spent in J
  std::size_t tau = 1;  // i + 1
  double lo = 0.0;
  double hi = 0.0;
  double d = 0.0;       // sup of 1/|That'| over the cell
  double image_lo = 0.0;
  double image_hi = 0.0;
  double length() const { return hi - lo; }
};

/// Part of a branch whose orbit stays in J longer than n_max steps.
struct Sliver {
  std::size_t j = 0;
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

struct InducedSystem {
  BranchMap map;
  double z = 0.0;
  std::size_t n_max = 0;
  std::vector<double> pullbacks;  // z_0 = z > z_1 > ... > z_{n_max}
  std::vector<Cell> cells;        // sorted by lo
  std::vector<Sliver> slivers;
  double tail_bound = 0.0;        // total sliver length
  double distortion = 0.0;        // sup |That''| / |That'|^2 over resolved cells
  double min_image_length = 1.0;  // min |That(I_ij)| / |Xhat|
  bool rigorous = true;           // false when custom branches forced interior sampling

  double xhat_length() const { return 1.0 - z; }

  /// d_n = max_j d_{n-1, j} over non-cusp branches, for n = 1 .. n_max + 1 (index n - 1).
  std::vector<double> d_n() const {
    std::vector<double> out(n_max + 1, 0.0);
    for (const auto& c : cells)
      if (c.j > 0 && c.i <= n_max) out[c.i] = std::max(out[c.i], c.d);
    return out;
  }

  std::size_t max_tau() const {
    std::size_t m = 1;
    for (const auto& c : cells) m = std::max(m, c.tau);
    return m;
  }
};

/// z_0 = z and z_n = T_1^{-1}(z_{n-1}) for n = 1 .. n_max.
inline std::vector<double> pullback_sequence(const BranchMap& map, double z, std::size_t n_max) {
  std::vector<double> zs{z};
  if (z == 0.0) return zs;
  zs.reserve(n_max + 1);
  for (std::size_t n = 1; n <= n_max; ++n) {
    const double next = branch_inverse(map, 0, zs.back());
    if (!(next < zs.back()) || next <= 0.0)
      throw NumericalError("pullback sequence stopped decreasing at n = " + std::to_string(n));
    zs.push_back(next);
  }
  return zs;
}

namespace detail {

struct OrbitJet {
  double deriv = 1.0;  // product of T_1' along the orbit
  double dist = 0.0;   // accumulated distortion term
  double end = 0.0;    // endpoint after the steps
};

inline double distortion_term(const Branch& b, double x) {
  const double d1 = b.derivative(x);
  return b.second_derivative(x) / (d1 * d1);
}

// Pushes y forward `steps` times along branch 0, composing derivative and distortion.
inline OrbitJet forward_jet(const Branch& b1, double y, std::size_t steps, bool with_distortion) {
  OrbitJet jet;
  for (std::size_t s = 0; s < steps; ++s) {
    const double d1 = b1.derivative(y);
    if (with_distortion) jet.dist = distortion_term(b1, y) + jet.dist / d1;
    jet.deriv *= d1;
    y = b1.value(y);
  }
  jet.end = y;
  return jet;
}

inline bool has_custom(const BranchMap& map) {
  return std::any_of(map.branches().begin(), map.branches().end(), [](const Branch& b) { return b.is_custom(); });
}

inline bool has_second_derivative(const Branch& b) {
  if (const auto* u = std::get_if<CustomKind>(&b.kind())) return static_cast<bool>(u->second);
  return true;
}

}  // namespace detail

/// Builds the return-time partition of [z, 1], resolving bands up to depth n_max.
inline InducedSystem build_induced(const BranchMap& map, double z, std::size_t n_max) {
  const Branch& b1 = map.branch(0);
  if (!(z >= 0.0 && z < b1.hi())) throw ConstructionError("z must lie in the domain of the first branch");
  if (z > 0.0) {
    const double tz = b1.value(z);
    if (!(tz > z)) throw ConstructionError("T(z) must exceed z");
    if (map.owner(tz) != 0) throw ConstructionError("T(z) must lie in the first branch domain");
  }

  InducedSystem ind{map, z, n_max, pullback_sequence(map, z, n_max), {}, {}, 0.0, 0.0, 1.0, true};
  const auto& zs = ind.pullbacks;
  const std::size_t depth = zs.size() - 1;  // 0 when z = 0
  const bool custom = detail::has_custom(map);
  bool distortion_ok = std::all_of(map.branches().begin(), map.branches().end(),
                                   [](const Branch& b) { return detail::has_second_derivative(b); });
  if (custom) ind.rigorous = false;

  // Prefix products P_i = prod_{k=1}^{i} T_1'(z_k) and distortion sums Q_i along the pullbacks.
  std::vector<double> P(depth + 1, 1.0), Q(depth + 1, 0.0);
  for (std::size_t k = 1; k <= depth; ++k) {
    P[k] = P[k - 1] * b1.derivative(zs[k]);
    Q[k] = Q[k - 1] + (distortion_ok ? detail::distortion_term(b1, zs[k]) / P[k - 1] : 0.0);
  }
  const double d1_z0 = depth > 0 ? b1.derivative(zs[0]) : 1.0;
  const double a_z0 = (depth > 0 && distortion_ok) ? detail::distortion_term(b1, zs[0]) : 0.0;

  std::vector<double> ascending(zs.rbegin(), zs.rend());  // z_{depth} < ... < z_0
  const double xhat = ind.xhat_length();
  double distortion = 0.0;
  double min_image = std::numeric_limits<double>::infinity();

  for (std::size_t j = 0; j < map.size(); ++j) {
    const Branch& b = map.branch(j);
    const double xa = std::max(b.lo(), z);
    const double xb = b.hi();
    if (!(xa < xb)) continue;
    const double ya = std::clamp(b.value(xa), 0.0, 1.0);
    const double yb = std::clamp(b.value(xb), 0.0, 1.0);

    std::vector<double> ys{ya};
    auto first = std::upper_bound(ascending.begin(), ascending.end(), ya);
    for (auto it = first; it != ascending.end() && *it < yb; ++it) ys.push_back(*it);
    ys.push_back(yb);

    std::vector<double> xs(ys.size());
    xs.front() = xa;
    xs.back() = xb;
    for (std::size_t m = 1; m + 1 < ys.size(); ++m) xs[m] = branch_inverse(map, j, ys[m]);

    for (std::size_t m = 0; m + 1 < ys.size(); ++m) {
      const double y_lo = ys[m];
      const double y_hi = ys[m + 1];
      if (!(xs[m + 1] > xs[m])) continue;
      if (depth > 0 && y_lo < zs[depth]) {
        ind.slivers.push_back({j, xs[m], xs[m + 1]});
        continue;
      }
      // band i: z_i <= y_lo < z_{i-1}
      std::size_t i = 0;
      if (y_lo < z) {
        const auto pos = std::upper_bound(ascending.begin(), ascending.end(), y_lo) - ascending.begin();
        i = depth - static_cast<std::size_t>(pos - 1);
      }
      Cell cell;
      cell.j = j;
      cell.i = i;
      cell.tau = i + 1;
      cell.lo = xs[m];
      cell.hi = xs[m + 1];

      const bool full_band = i > 0 && y_lo == zs[i] && y_hi == zs[i - 1];
      auto endpoint = [&](double x, double y, bool left) {
        detail::OrbitJet jet;
        if (i == 0) {
          jet.end = y;
        } else if (full_band) {
          jet.deriv = left ? P[i] : P[i - 1] * d1_z0;
          jet.dist = left ? Q[i] : a_z0 + Q[i - 1] / d1_z0;
          jet.end = left ? z : b1.value(z);
        } else {
          jet = detail::forward_jet(b1, y, i, distortion_ok);
        }
        const double dj = b.derivative(x);
        const double total = dj * jet.deriv;
        double dist = 0.0;
        if (distortion_ok) dist = jet.dist + detail::distortion_term(b, x) / jet.deriv;
        return std::tuple<double, double, double>{1.0 / std::abs(total), std::abs(dist), jet.end};
      };
      const auto [d_lo, c_lo, e_lo] = endpoint(cell.lo, y_lo, true);
      const auto [d_hi, c_hi, e_hi] = endpoint(cell.hi, y_hi, false);
      cell.d = std::max(d_lo, d_hi);
      cell.image_lo = e_lo;
      cell.image_hi = e_hi;
      double cell_dist = std::max(c_lo, c_hi);
      if (b.is_custom() || (i > 0 && b1.is_custom())) {
        constexpr int kSamples = 64;
        for (int s = 1; s < kSamples; ++s) {
          const double x = cell.lo + (cell.hi - cell.lo) * s / kSamples;
          const auto jet = detail::forward_jet(b1, b.value(x), i, distortion_ok);
          const double dj = b.derivative(x);
          cell.d = std::max(cell.d, 1.0 / std::abs(dj * jet.deriv));
          if (distortion_ok) cell_dist = std::max(cell_dist, std::abs(jet.dist + detail::distortion_term(b, x) / jet.deriv));
        }
      }
      distortion = std::max(distortion, cell_dist);
      min_image = std::min(min_image, (cell.image_hi - cell.image_lo) / xhat);
      ind.cells.push_back(cell);
    }
  }

  std::sort(ind.cells.begin(), ind.cells.end(), [](const Cell& a, const Cell& b) { return a.lo < b.lo; });
  std::sort(ind.slivers.begin(), ind.slivers.end(), [](const Sliver& a, const Sliver& b) { return a.lo < b.lo; });
  for (const auto& s : ind.slivers) ind.tail_bound += s.length();
  ind.distortion = distortion_ok ? distortion : std::numeric_limits<double>::quiet_NaN();
  ind.min_image_length = std::isfinite(min_image) ? min_image : 1.0;
  return ind;
}

/// Measure of {tau = k} for k = 0 .. n_max + 2; slivers are counted at k = n_max + 2.
/// With weights the measure is the integral of the weights; normalize divides by |Xhat|.
inline std::vector<double> return_time_masses(const InducedSystem& ind, const GridFunction* weights = nullptr,
                                              bool normalize = false) {
  std::vector<double> mass(ind.n_max + 3, 0.0);
  auto measure = [&](double lo, double hi) { return weights ? weights->integral_over(lo, hi) : hi - lo; };
  for (const auto& c : ind.cells) mass[std::min(c.tau, ind.n_max + 1)] += measure(c.lo, c.hi);
  for (const auto& s : ind.slivers) mass[ind.n_max + 2] += measure(s.lo, s.hi);
  if (normalize)
    for (auto& m : mass) m /= ind.xhat_length();
  return mass;
}

/// Tail profile t[k] = measure(tau > k) for k = 0 .. n_max + 1, slivers included.
inline std::vector<double> tail_profile(const InducedSystem& ind, const GridFunction* weights = nullptr,
                                        bool normalize = false) {
  const auto mass = return_time_masses(ind, weights, normalize);
  std::vector<double> tail(ind.n_max + 2, 0.0);
  double acc = 0.0;
  for (std::size_t k = mass.size() - 1; k >= 1; --k) {
    acc += mass[k];
    if (k - 1 < tail.size()) tail[k - 1] = acc;
  }
  return tail;
}

/// Measure of {tau > n}, slivers included. n must not exceed n_max.
inline double tail_measure(const InducedSystem& ind, std::size_t n, const GridFunction* weights = nullptr,
                           bool normalize = false) {
  if (n > ind.n_max) throw RangeError("tail_measure: n exceeds n_max");
  return tail_profile(ind, weights, normalize)[n];
}

/// Mean return time against the given weights (density on Xhat w.r.t. normalized Lebesgue);
/// sliver points are assigned return time n_max + 2.
inline double mean_return_time(const InducedSystem& ind, const GridFunction* weights = nullptr) {
  const auto mass = return_time_masses(ind, weights, true);
  double s = 0.0;
  for (std::size_t k = 1; k < mass.size(); ++k) s += static_cast<double>(k) * mass[k];
  return s;
}

/// Decay exponent of the pullbacks over their last decade: z_n ~ n^{-p}.
inline double pullback_exponent(const InducedSystem& ind) {
  const std::size_t n = ind.pullbacks.size() - 1;
  if (n < 20) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t m = n / 10;
  return -std::log(ind.pullbacks[n] / ind.pullbacks[m]) / std::log(static_cast<double>(n) / m);
}

struct KacResult {
  double value = 0.0;
  double tail_slack = 0.0;
  bool within() const { return std::abs(value - 1.0) <= tail_slack; }
};

/// Kac sum over resolved cells: mu_Xhat * sum_n n * muhat(tau = n).
/// mu_hat is a density on Xhat with respect to the normalized Lebesgue measure.
inline KacResult kac_check(const InducedSystem& ind, const GridFunction& mu_hat, double mu_Xhat) {
  const auto mass = return_time_masses(ind, &mu_hat, true);
  KacResult r;
  for (std::size_t k = 1; k <= ind.n_max + 1; ++k) r.value += static_cast<double>(k) * mass[k];
  r.value *= mu_Xhat;
  const double sliver = mass[ind.n_max + 2];
  if (sliver > 0.0) {
    // tau on the slivers exceeds n_max + 1; with tails ~ n^{-p} the conditional mean is at most N p / (p - 1).
    const double p = pullback_exponent(ind);
    const double factor = (std::isfinite(p) && p > 1.0) ? p / (p - 1.0) : std::numeric_limits<double>::infinity();
    r.tail_slack = mu_Xhat * sliver * static_cast<double>(ind.n_max + 2) * factor;
  }
  r.tail_slack += 1e-12;
  return r;
}

/// gcd of the return times of cells with tau <= limit and positive length.
inline std::size_t return_time_gcd(const InducedSystem& ind, std::size_t limit = 50) {
  std::size_t g = 0;
  for (const auto& c : ind.cells)
    if (c.tau <= limit && c.length() > 0.0) g = std::gcd(g, c.tau);
  return g;
}

}  // namespace intermit
