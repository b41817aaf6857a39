#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "intermit/error.hpp"

namespace intermit {

/// Least-squares fit of log|value| = intercept + slope * log n.
struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double n_lo = 0.0;
  double n_hi = 0.0;
  double max_abs_residual = 0.0;
  std::size_t points = 0;
};

inline void to_json(nlohmann::json& j, const RateFit& f) {
  j = nlohmann::json{{"slope", f.slope},         {"intercept", f.intercept}, {"window", {f.n_lo, f.n_hi}},
                     {"max_abs_residual", f.max_abs_residual}, {"points", f.points}};
}

/// Fits the entries with n in [n_lo, n_hi] and value > 0. Requires at least 5 of them.
inline RateFit fit_rate(std::span<const double> n, std::span<const double> value, double n_lo, double n_hi) {
  if (n.size() != value.size()) throw InsufficientDataError("fit_rate: n and value sizes differ");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < n.size(); ++k) {
    if (n[k] >= n_lo && n[k] <= n_hi && value[k] > 0.0 && n[k] > 0.0)
      pts.emplace_back(std::log(n[k]), std::log(value[k]));
  }
  if (pts.size() < 5) throw InsufficientDataError("fit_rate: fewer than 5 positive entries in window");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw InsufficientDataError("fit_rate: window has a single abscissa");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.n_lo = n_lo;
  fit.n_hi = n_hi;
  fit.points = pts.size();
  for (const auto& [x, y] : pts)
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(y - fit.intercept - fit.slope * x));
  return fit;
}

/// Convenience overload for a series indexed n = first, first+1, ...
inline RateFit fit_rate(std::span<const double> value, std::size_t first, double n_lo, double n_hi) {
  std::vector<double> n(value.size());
  for (std::size_t k = 0; k < value.size(); ++k) n[k] = static_cast<double>(first + k);
  return fit_rate(std::span<const double>(n), value, n_lo, n_hi);
}

}  // namespace intermit
