#pragma once

// Partitions of an interval into cells and piecewise-constant functions on
// them. Values carry cell-average semantics: the integral of a GridFunction
// over a cell is value * width.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "intermit/error.hpp"

namespace intermit {

class Grid {
public:
  Grid() = default;

  /// Uniform grid of n cells over [lo, hi].
  static Grid uniform(double lo, double hi, std::size_t n) {
    if (n < 1 || !(lo < hi)) throw DomainError("uniform grid needs n >= 1 and lo < hi");
    Grid g;
    g.edges_.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k) g.edges_[k] = lo + (hi - lo) * static_cast<double>(k) / n;
    g.edges_.back() = hi;
    g.uniform_ = true;
    return g;
  }

  static Grid from_edges(std::vector<double> edges) {
    if (edges.size() < 2) throw DomainError("grid needs at least one cell");
    for (std::size_t k = 1; k < edges.size(); ++k)
      if (!(edges[k] > edges[k - 1])) throw DomainError("grid edges must be strictly increasing");
    Grid g;
    g.edges_ = std::move(edges);
    return g;
  }

  std::size_t size() const { return edges_.empty() ? 0 : edges_.size() - 1; }
  double lo() const { return edges_.front(); }
  double hi() const { return edges_.back(); }
  double length() const { return hi() - lo(); }
  double edge(std::size_t k) const { return edges_[k]; }
  double cell_lo(std::size_t k) const { return edges_[k]; }
  double cell_hi(std::size_t k) const { return edges_[k + 1]; }
  double width(std::size_t k) const { return edges_[k + 1] - edges_[k]; }
  double center(std::size_t k) const { return 0.5 * (edges_[k] + edges_[k + 1]); }
  bool is_uniform() const { return uniform_; }
  const std::vector<double>& edges() const { return edges_; }

  std::vector<double> widths() const {
    std::vector<double> w(size());
    for (std::size_t k = 0; k < size(); ++k) w[k] = width(k);
    return w;
  }

  /// Index of the half-open cell [e_k, e_{k+1}) containing x; hi maps to the last cell.
  std::size_t locate(double x) const {
    if (x <= lo()) return 0;
    if (x >= hi()) return size() - 1;
    auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
    return static_cast<std::size_t>(it - edges_.begin()) - 1;
  }

  /// Index of the first cell whose lower edge is >= x - tol (x treated as an edge).
  std::size_t edge_index(double x, double tol = 0.0) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), x - tol);
    return static_cast<std::size_t>(it - edges_.begin());
  }

private:
  std::vector<double> edges_;
  bool uniform_ = false;
};

template <class T>
struct BasicGridFunction {
  Grid grid;
  std::vector<T> values;

  BasicGridFunction() = default;
  BasicGridFunction(Grid g, std::vector<T> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid.size()) throw DomainError("grid function size does not match grid");
  }
  BasicGridFunction(Grid g, T fill) : grid(std::move(g)), values(grid.size(), fill) {}

  std::size_t size() const { return values.size(); }
  double lo() const { return grid.lo(); }
  double hi() const { return grid.hi(); }

  /// Lebesgue integral over the grid's interval.
  T integral() const {
    T s{};
    for (std::size_t k = 0; k < size(); ++k) s += values[k] * grid.width(k);
    return s;
  }

  /// Integral with respect to the normalized Lebesgue measure on [lo, hi].
  T mean() const { return integral() / grid.length(); }

  /// Lebesgue integral over [a, b] ∩ [lo, hi] of the piecewise-constant function.
  T integral_over(double a, double b) const {
    a = std::max(a, grid.lo());
    b = std::min(b, grid.hi());
    if (!(a < b)) return T{};
    const std::size_t k0 = grid.locate(a);
    const std::size_t k1 = grid.locate(b);
    T s{};
    for (std::size_t k = k0; k <= k1 && k < size(); ++k) {
      const double lo = std::max(a, grid.cell_lo(k));
      const double hi = std::min(b, grid.cell_hi(k));
      if (hi > lo) s += values[k] * (hi - lo);
    }
    return s;
  }

  BasicGridFunction& operator*=(T c) {
    for (auto& v : values) v *= c;
    return *this;
  }
};

using GridFunction = BasicGridFunction<double>;
using ComplexGridFunction = BasicGridFunction<std::complex<double>>;

/// Cell averages of f on the grid by composite Gauss-Legendre (3 points per cell).
template <class F>
GridFunction project(const Grid& grid, F&& f) {
  static constexpr double kNodes[3] = {-0.7745966692414834, 0.0, 0.7745966692414834};
  static constexpr double kWeights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  GridFunction out(grid, 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double c = grid.center(k);
    const double h = 0.5 * grid.width(k);
    double s = 0.0;
    for (int q = 0; q < 3; ++q) s += kWeights[q] * f(c + h * kNodes[q]);
    out.values[k] = 0.5 * s;
  }
  return out;
}

/// Exact cell averages of the indicator of [a, b].
inline GridFunction indicator(const Grid& grid, double a, double b) {
  GridFunction out(grid, 0.0);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double lo = std::max(a, grid.cell_lo(k));
    const double hi = std::min(b, grid.cell_hi(k));
    if (hi > lo) out.values[k] = (hi - lo) / grid.width(k);
  }
  return out;
}

/// L^1 norm with respect to the normalized Lebesgue measure on the grid interval.
template <class T>
double l1_norm(const BasicGridFunction<T>& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += std::abs(f.values[k]) * f.grid.width(k);
  return s / f.grid.length();
}

}  // namespace intermit
