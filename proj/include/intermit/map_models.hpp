#pragma once

// Piecewise increasing interval maps with an indifferent fixed point at 0.
//
// A BranchMap is an ordered list of branches tiling [0,1]. Each branch is a
// C^2 increasing diffeomorphism of its closed domain onto its image. The first
// branch is usually of cusp kind, T(x) = x + c x^{1+gamma}, which gives the
// neutral fixed point T(0) = 0, T'(0) = 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "intermit/error.hpp"

namespace intermit {

enum class Order { value, derivative, second_derivative };

struct CuspKind {
  double c = 4.0;
  double gamma = 0.5;
};

struct AffineKind {
  double slope = 2.0;
  double intercept = 0.0;
};

struct CustomKind {
  std::function<double(double)> forward;
  std::function<double(double)> derivative;
  std::function<double(double)> second;  // may be empty
};

class Branch {
public:
  using Kind = std::variant<CuspKind, AffineKind, CustomKind>;

  Branch(double lo, double hi, Kind kind) : lo_(lo), hi_(hi), kind_(std::move(kind)) {
    if (!(lo_ < hi_)) throw ConstructionError("branch domain must satisfy lo < hi");
    std::visit(
        [](const auto& k) {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, CuspKind>) {
            if (!(k.c > 0.0) || !(k.gamma > 0.0 && k.gamma < 1.0))
              throw ConstructionError("cusp branch needs c > 0 and gamma in (0,1)");
          } else if constexpr (std::is_same_v<K, AffineKind>) {
            if (!(k.slope > 0.0)) throw ConstructionError("affine branch must be increasing");
          } else {
            if (!k.forward || !k.derivative) throw ConstructionError("custom branch needs forward and derivative callables");
          }
        },
        kind_);
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const Kind& kind() const { return kind_; }
  bool is_cusp() const { return std::holds_alternative<CuspKind>(kind_); }
  bool is_affine() const { return std::holds_alternative<AffineKind>(kind_); }
  bool is_custom() const { return std::holds_alternative<CustomKind>(kind_); }

  double value(double x) const {
    return std::visit(
        [x](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, CuspKind>) {
            return x + k.c * std::pow(x, 1.0 + k.gamma);
          } else if constexpr (std::is_same_v<K, AffineKind>) {
            return k.slope * x + k.intercept;
          } else {
            return k.forward(x);
          }
        },
        kind_);
  }

  double derivative(double x) const {
    return std::visit(
        [x](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, CuspKind>) {
            return 1.0 + k.c * (1.0 + k.gamma) * std::pow(x, k.gamma);
          } else if constexpr (std::is_same_v<K, AffineKind>) {
            return k.slope;
          } else {
            return k.derivative(x);
          }
        },
        kind_);
  }

  double second_derivative(double x) const {
    return std::visit(
        [x](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, CuspKind>) {
            if (x == 0.0) return std::numeric_limits<double>::infinity();
            return k.c * k.gamma * (1.0 + k.gamma) * std::pow(x, k.gamma - 1.0);
          } else if constexpr (std::is_same_v<K, AffineKind>) {
            return 0.0;
          } else {
            if (!k.second) throw UnsupportedError("custom branch has no second-derivative formula");
            return k.second(x);
          }
        },
        kind_);
  }

  double image_lo() const { return value(lo_); }
  double image_hi() const { return value(hi_); }

private:
  double lo_;
  double hi_;
  Kind kind_;
};

/// Ordered branches tiling [0,1]. Immutable after construction.
///
/// Ownership of breakpoints is half-open: x in [a_{j-1}, a_j) belongs to branch
/// j, and x = 1 belongs to the last branch.
class BranchMap {
public:
  explicit BranchMap(std::vector<Branch> branches) : branches_(std::move(branches)) {
    if (branches_.empty()) throw ConstructionError("map needs at least one branch");
    if (branches_.front().lo() != 0.0 || branches_.back().hi() != 1.0)
      throw ConstructionError("branch domains must tile [0,1]");
    for (std::size_t j = 1; j < branches_.size(); ++j) {
      if (branches_[j].lo() != branches_[j - 1].hi())
        throw ConstructionError("branch domains must be adjacent and disjoint");
    }
    constexpr double kImageSlack = 1e-12;
    constexpr int kSamples = 64;
    for (const auto& b : branches_) {
      double prev = b.value(b.lo());
      if (prev < -kImageSlack) throw ConstructionError("branch image leaves [0,1]");
      for (int s = 1; s <= kSamples; ++s) {
        const double x = b.lo() + (b.hi() - b.lo()) * s / kSamples;
        const double v = b.value(x);
        if (!(v > prev)) throw ConstructionError("branch is not strictly increasing");
        prev = v;
      }
      if (prev > 1.0 + kImageSlack) throw ConstructionError("branch image leaves [0,1]");
    }
  }

  std::size_t size() const { return branches_.size(); }
  const Branch& branch(std::size_t j) const { return branches_.at(j); }
  const std::vector<Branch>& branches() const { return branches_; }

  std::vector<double> breakpoints() const {
    std::vector<double> a{0.0};
    for (const auto& b : branches_) a.push_back(b.hi());
    return a;
  }

  std::size_t owner(double x) const {
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("x must lie in [0,1]");
    for (std::size_t j = 0; j < branches_.size(); ++j) {
      if (x < branches_[j].hi()) return j;
    }
    return branches_.size() - 1;
  }

  /// Leading cusp parameters of branch 0, if it is of cusp kind.
  std::optional<CuspKind> cusp() const {
    if (const auto* c = std::get_if<CuspKind>(&branches_.front().kind())) return *c;
    return std::nullopt;
  }

  double operator()(double x) const { return branches_[owner(x)].value(x); }

private:
  std::vector<Branch> branches_;
};

inline double evaluate(const BranchMap& map, double x, Order order = Order::value) {
  const Branch& b = map.branch(map.owner(x));
  switch (order) {
    case Order::value: return b.value(x);
    case Order::derivative: return b.derivative(x);
    case Order::second_derivative: return b.second_derivative(x);
  }
  return b.value(x);
}

namespace detail {

// Safeguarded Newton on an increasing function over the bracket [lo, hi].
inline double invert_increasing(const Branch& b, double y) {
  constexpr double kResidualTol = 1e-13;
  constexpr int kMaxIter = 200;
  double lo = b.lo();
  double hi = b.hi();
  if (y == b.image_lo()) return lo;
  if (y == b.image_hi()) return hi;

  double x;
  if (const auto* a = std::get_if<AffineKind>(&b.kind())) {
    x = std::clamp((y - a->intercept) / a->slope, lo, hi);
  } else if (b.is_cusp()) {
    x = std::clamp(y, lo, hi);  // T(x) >= x, so the root lies left of y
  } else {
    x = 0.5 * (lo + hi);
  }

  bool converged = false;
  for (int it = 0; it < kMaxIter; ++it) {
    const double f = b.value(x) - y;
    if (f == 0.0) {
      converged = true;
      break;
    }
    if (f < 0.0) lo = x; else hi = x;
    const double d = b.derivative(x);
    double next = (d > 0.0 && std::isfinite(d)) ? x - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double step = std::abs(next - x);
    x = next;
    if (step <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(x), 1e-300) ||
        hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(x), 1e-300)) {
      converged = true;
      break;
    }
  }
  const double residual = std::abs(b.value(x) - y);
  if (!converged && residual > kResidualTol)
    throw NumericalError("branch inversion did not converge (residual " + std::to_string(residual) + ")");
  if (residual > kResidualTol)
    throw NumericalError("branch inversion residual " + std::to_string(residual) + " exceeds 1e-13");
  return x;
}

}  // namespace detail

/// Solves T_j(x) = y on branch j (0-based) for y in the closed branch image.
inline double branch_inverse(const BranchMap& map, std::size_t branch_index, double y) {
  if (branch_index >= map.size()) throw RangeError("branch index out of range");
  const Branch& b = map.branch(branch_index);
  const double ylo = b.image_lo();
  const double yhi = b.image_hi();
  const double slack = 4.0 * std::numeric_limits<double>::epsilon();
  if (y < ylo - slack || y > yhi + slack) throw RangeError("y outside branch image");
  return detail::invert_increasing(b, std::clamp(y, ylo, yhi));
}

// ---------------------------------------------------------------------------
// Families

struct MapSpec {
  std::string family = "pm3";  // pm3 | lsv | custom
  double gamma = 0.5;
  double c = 4.0;
  double z = 0.1;
  // custom only: breakpoints a_0 = 0 < ... < a_K = 1 and one slope per affine
  // branch. With K-1 slopes the first branch is a cusp branch (c, gamma).
  std::vector<double> breakpoints;
  std::vector<double> slopes;
};

inline void to_json(nlohmann::json& j, const MapSpec& s) {
  j = nlohmann::json{{"family", s.family}, {"gamma", s.gamma}, {"c", s.c}, {"z", s.z}};
  if (!s.breakpoints.empty()) j["breakpoints"] = s.breakpoints;
  if (!s.slopes.empty()) j["slopes"] = s.slopes;
}

inline void from_json(const nlohmann::json& j, MapSpec& s) {
  s.family = j.value("family", std::string("pm3"));
  s.gamma = j.value("gamma", 0.5);
  s.c = j.value("c", 4.0);
  s.z = j.value("z", s.family == "lsv" ? 0.25 : 0.1);
  s.breakpoints = j.value("breakpoints", std::vector<double>{});
  s.slopes = j.value("slopes", std::vector<double>{});
}

/// Breakpoint a of the cusp branch x + c x^{1+gamma} mapping [0,a] onto [0,1].
inline double cusp_full_breakpoint(double c, double gamma) {
  const Branch probe(0.0, 1.0, CuspKind{c, gamma});
  return detail::invert_increasing(probe, 1.0);
}

inline BranchMap make_pm3(double gamma = 0.5, double c = 4.0) {
  if (!(gamma > 0.0 && gamma < 1.0) || !(c > 0.0))
    throw ConstructionError("pm3 needs gamma in (0,1) and c > 0");
  const double a = cusp_full_breakpoint(c, gamma);
  if (!(a < 0.5)) throw ConstructionError("pm3 breakpoint a must be < 1/2 for expanding affine branches");
  const double mid = 0.5 * (a + 1.0);
  const double slope = 2.0 / (1.0 - a);
  if (!(slope > 1.0)) throw ConstructionError("pm3 affine slopes must exceed 1");
  std::vector<Branch> br;
  br.emplace_back(0.0, a, CuspKind{c, gamma});
  br.emplace_back(a, mid, AffineKind{slope, -slope * a});
  br.emplace_back(mid, 1.0, AffineKind{slope, -slope * mid});
  return BranchMap(std::move(br));
}

/// Liverani-Saussol-Vaienti map: x(1 + (2x)^gamma) on [0,1/2), 2x-1 on [1/2,1].
inline BranchMap make_lsv(double gamma = 0.5) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConstructionError("lsv needs gamma in (0,1)");
  std::vector<Branch> br;
  br.emplace_back(0.0, 0.5, CuspKind{std::pow(2.0, gamma), gamma});
  br.emplace_back(0.5, 1.0, AffineKind{2.0, -1.0});
  return BranchMap(std::move(br));
}

/// Affine branches T(x) = s_j (x - a_{j-1}); optionally a leading cusp branch.
inline BranchMap make_custom(const std::vector<double>& breakpoints, const std::vector<double>& slopes,
                             std::optional<CuspKind> cusp = std::nullopt) {
  if (breakpoints.size() < 2) throw ConstructionError("custom map needs at least two breakpoints");
  const std::size_t k = breakpoints.size() - 1;
  const std::size_t n_affine = cusp ? k - 1 : k;
  if (slopes.size() != n_affine) throw ConstructionError("custom map: slope count does not match breakpoints");
  std::vector<Branch> br;
  std::size_t s = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const double lo = breakpoints[j];
    const double hi = breakpoints[j + 1];
    if (j == 0 && cusp) {
      br.emplace_back(lo, hi, *cusp);
      continue;
    }
    const double slope = slopes[s++];
    if (!(slope > 1.0)) throw ConstructionError("custom map: affine slopes must exceed 1");
    br.emplace_back(lo, hi, AffineKind{slope, -slope * lo});
  }
  return BranchMap(std::move(br));
}

inline BranchMap make_doubling() { return make_custom({0.0, 0.5, 1.0}, {2.0, 2.0}); }

/// x -> k x mod 1 written as k full affine branches.
inline BranchMap make_equal_slope(int k) {
  std::vector<double> a;
  for (int i = 0; i <= k; ++i) a.push_back(static_cast<double>(i) / k);
  a.back() = 1.0;
  return make_custom(a, std::vector<double>(static_cast<std::size_t>(k), static_cast<double>(k)));
}

inline BranchMap make_family(const MapSpec& spec) {
  if (spec.family == "pm3") return make_pm3(spec.gamma, spec.c);
  if (spec.family == "lsv") return make_lsv(spec.gamma);
  if (spec.family == "custom") {
    const bool has_cusp = spec.breakpoints.size() == spec.slopes.size() + 2;
    return make_custom(spec.breakpoints, spec.slopes,
                       has_cusp ? std::optional<CuspKind>(CuspKind{spec.c, spec.gamma}) : std::nullopt);
  }
  throw ConstructionError("unknown map family '" + spec.family + "'");
}

}  // namespace intermit
