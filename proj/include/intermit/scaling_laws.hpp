#pragma once

// Local models of maps with an indifferent fixed point at 0 in dimension m, their
// inverse orbits, and the decay of |det DT^{-n}| and ||DT^{-n}|| along them.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "intermit/error.hpp"
#include "intermit/rate_fit.hpp"

namespace intermit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct LocalModel {
  std::string id;  // radial, ex71, ex72, ex73, ex74
  std::size_t m = 1;
  double gamma = 1.0;
  std::function<Vec(const Vec&)> forward;
  std::function<Mat(const Vec&)> jacobian;
  std::function<bool(const Vec&)> constraint;  // empty: no constraint
  std::function<Vec(const Vec&)> project;      // pulls a point back into the constrained region
  bool radial = false;             // T(w) = w (1 + |w|^gamma): exact scalar radius recursion
  bool bounded_distortion = false;  // the det bound enters without the m/(m+alpha) loss
  double tail_dimension = 0.0;      // nu(tau > k) ~ |w_k|^tail_dimension
  // leading-order predictions
  double det_slope = 0.0;
  double norm_slope = 0.0;
};

/// T(w) = w (1 + |w|^gamma) in R^m.
inline LocalModel make_radial(double gamma, std::size_t m, std::string id = "radial") {
  if (!(gamma > 0.0) || m < 1) throw ConstructionError("radial model needs gamma > 0 and m >= 1");
  LocalModel M;
  M.id = std::move(id);
  M.m = m;
  M.gamma = gamma;
  M.radial = true;
  M.bounded_distortion = true;
  M.tail_dimension = static_cast<double>(m);
  M.det_slope = -(static_cast<double>(m) / gamma + 1.0);
  M.norm_slope = m == 1 ? -(1.0 / gamma + 1.0) : -1.0 / gamma;
  M.forward = [gamma](const Vec& w) -> Vec { return w * (1.0 + std::pow(w.norm(), gamma)); };
  M.jacobian = [gamma, m](const Vec& w) -> Mat {
    const double r = w.norm();
    Mat J = Mat::Identity(m, m) * (1.0 + std::pow(r, gamma));
    if (r > 0.0) J += gamma * std::pow(r, gamma - 2.0) * w * w.transpose();
    return J;
  };
  return M;
}

inline LocalModel make_ex74(std::size_t m, double gamma) {
  if (m < 3 || !(gamma < static_cast<double>(m))) throw ConstructionError("ex74 needs m >= 3 and gamma < m");
  return make_radial(gamma, m, "ex74");
}

/// (x(1+|w|^2), y(1+|w|^2), z(1+2|w|^2)) in R^3.
inline LocalModel make_ex71() {
  LocalModel M;
  M.id = "ex71";
  M.m = 3;
  M.gamma = 2.0;
  M.tail_dimension = 3.0;
  M.det_slope = -3.0;
  M.norm_slope = -0.5;
  M.forward = [](const Vec& w) -> Vec {
    const double s = w.squaredNorm();
    return Vec{{w[0] * (1 + s), w[1] * (1 + s), w[2] * (1 + 2 * s)}};
  };
  M.jacobian = [](const Vec& w) -> Mat {
    const double s = w.squaredNorm();
    const Eigen::Vector3d c{1.0, 1.0, 2.0};
    Mat J(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) J(i, j) = (i == j ? 1 + c[i] * s : 0.0) + 2 * c[i] * w[i] * w[j];
    return J;
  };
  return M;
}

/// (x(1+|w|^gamma), y(1+2|w|^gamma)) in R^2, 0 < gamma < 1.
inline LocalModel make_ex72(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConstructionError("ex72 needs 0 < gamma < 1");
  LocalModel M;
  M.id = "ex72";
  M.m = 2;
  M.gamma = gamma;
  M.tail_dimension = 2.0;
  M.det_slope = -(1.0 + 3.0 / gamma);
  M.norm_slope = -(1.0 / gamma + 1.0);  // inverse orbits align with the x-axis, where the expansion is radial
  M.forward = [gamma](const Vec& w) -> Vec {
    const double s = std::pow(w.norm(), gamma);
    return Vec{{w[0] * (1 + s), w[1] * (1 + 2 * s)}};
  };
  M.jacobian = [gamma](const Vec& w) -> Mat {
    const double r = w.norm();
    const double s = std::pow(r, gamma);
    const double ds = r > 0.0 ? gamma * std::pow(r, gamma - 2.0) : 0.0;  // d s / d w_i = ds * w_i
    const double c[2] = {1.0, 2.0};
    Mat J(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) J(i, j) = (i == j ? 1 + c[i] * s : 0.0) + c[i] * w[i] * ds * w[j];
    return J;
  };
  return M;
}

/// (x s, y s^2) with s = 1 + x^2 + y^2, restricted to |y| < x^2.
inline LocalModel make_ex73() {
  LocalModel M;
  M.id = "ex73";
  M.m = 2;
  M.gamma = 2.0;
  M.bounded_distortion = true;
  M.tail_dimension = 3.0;  // the cusp region {|y| < x^2} has volume ~ r^3 inside a ball of radius r
  M.det_slope = -2.5;
  M.norm_slope = -1.0;
  M.forward = [](const Vec& w) -> Vec {
    const double s = 1 + w.squaredNorm();
    return Vec{{w[0] * s, w[1] * s * s}};
  };
  M.jacobian = [](const Vec& w) -> Mat {
    const double x = w[0], y = w[1];
    const double s = 1 + x * x + y * y;
    Mat J(2, 2);
    J << s + 2 * x * x, 2 * x * y, 4 * s * x * y, s * s + 4 * s * y * y;
    return J;
  };
  M.constraint = [](const Vec& w) { return std::abs(w[1]) < w[0] * w[0]; };
  M.project = [](const Vec& w) -> Vec {
    Vec v = w;
    const double cap = 0.999 * w[0] * w[0];
    if (std::abs(v[1]) > cap) v[1] = std::copysign(cap, v[1]);
    return v;
  };
  return M;
}

struct InverseOrbit {
  std::vector<Vec> points;      // w_0 .. w_n
  std::size_t violations = 0;   // constraint repairs
  double max_residual = 0.0;    // max |T(w_{k+1}) - w_k| / |w_k|
};

/// w_{k+1} solves T(w_{k+1}) = w_k (Newton seeded at w_k; scalar radius recursion for radial models).
inline InverseOrbit inverse_orbit(const LocalModel& M, const Vec& w0, std::size_t n) {
  if (static_cast<std::size_t>(w0.size()) != M.m) throw DomainError("inverse_orbit: w0 has the wrong dimension");
  if (M.constraint && w0.norm() > 0.0 && !M.constraint(w0))
    throw DomainError("inverse_orbit: w0 violates the model's domain constraint");
  InverseOrbit out;
  out.points.reserve(n + 1);
  out.points.push_back(w0);
  if (w0.norm() == 0.0) {
    out.points.assign(n + 1, w0);
    return out;
  }
  for (std::size_t k = 1; k <= n; ++k) {
    const Vec& target = out.points.back();
    const double tn = target.norm();
    Vec w;
    if (M.radial) {
      // r (1 + r^gamma) = rho
      double r = tn;
      for (int it = 0; it < 100; ++it) {
        const double f = r * (1 + std::pow(r, M.gamma)) - tn;
        const double df = 1 + (1 + M.gamma) * std::pow(r, M.gamma);
        const double step = f / df;
        r -= step;
        if (std::abs(step) <= 1e-16 * r) break;
      }
      w = target * (r / tn);
    } else {
      w = target;
      bool ok = false;
      for (int it = 0; it < 100; ++it) {
        const Vec F = M.forward(w) - target;
        if (F.norm() <= 1e-15 * tn) {
          ok = true;
          break;
        }
        w -= M.jacobian(w).partialPivLu().solve(F);
        if (!w.allFinite()) break;
      }
      if (!ok && !((M.forward(w) - target).norm() <= 1e-12 * tn))
        throw NumericalError("inverse_orbit: Newton failed at step " + std::to_string(k));
    }
    if (M.constraint && !M.constraint(w)) {
      ++out.violations;
      w = M.project(w);
    }
    out.max_residual = std::max(out.max_residual, (M.forward(w) - target).norm() / tn);
    out.points.push_back(std::move(w));
  }
  return out;
}

/// |det DT^{-n}(w_0)| = prod_{k=1}^{n} |det DT(w_k)|^{-1}, n = 0 .. len - 1.
inline std::vector<double> det_product(const LocalModel& M, const InverseOrbit& orbit) {
  std::vector<double> out(orbit.points.size());
  double p = 1.0;
  out[0] = 1.0;
  for (std::size_t k = 1; k < orbit.points.size(); ++k) {
    const double d = std::abs(M.jacobian(orbit.points[k]).determinant());
    if (!(d > 0.0) || !std::isfinite(d)) throw NumericalError("det_product: singular Jacobian at step " + std::to_string(k));
    p /= d;
    out[k] = p;
  }
  return out;
}

/// ||DT^{-n}(w_0)|| with DT^{-n}(w_0) = DT(w_n)^{-1} ... DT(w_1)^{-1}.
inline std::vector<double> norm_product(const LocalModel& M, const InverseOrbit& orbit) {
  std::vector<double> out(orbit.points.size());
  Mat A = Mat::Identity(M.m, M.m);
  out[0] = 1.0;
  for (std::size_t k = 1; k < orbit.points.size(); ++k) {
    Eigen::PartialPivLU<Mat> lu(M.jacobian(orbit.points[k]));
    if (!(std::abs(lu.determinant()) > 0.0)) throw NumericalError("norm_product: singular Jacobian at step " + std::to_string(k));
    A = lu.solve(A);
    out[k] = Eigen::JacobiSVD<Mat>(A).singularValues()(0);
  }
  return out;
}

struct ExponentReport {
  std::string id;
  std::size_t m = 1;
  double gamma = 1.0;
  double alpha = 1.0;
  std::size_t n_max = 0;
  RateFit det_fit, norm_fit, tail_fit;
  double beta_prime = 0.0;       // |det slope|
  double tail_exponent = 0.0;    // |slope of |w_n|^tail_dimension|
  double beta_E = 0.0;           // beta' m/(m+alpha) - 1, or beta' - 1 under bounded distortion
  double beta_D = 0.0;           // alpha |norm slope| - 1
  bool finite_measure = false;   // tail exponent > 1
  bool condition_literal = false;  // beta_E >= max{2, tail - 1}
  bool condition_relaxed = false;  // beta_E > 1 and beta_E >= tail - 1
  double predicted_decay = std::numeric_limits<double>::quiet_NaN();
  double theory_det_slope = 0.0, theory_norm_slope = 0.0, theory_tail_exponent = 0.0;
  std::size_t violations = 0;
};

inline void to_json(nlohmann::json& j, const ExponentReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"id", r.id},
                     {"m", r.m},
                     {"gamma", r.gamma},
                     {"alpha", r.alpha},
                     {"n_max", r.n_max},
                     {"det_fit", r.det_fit},
                     {"norm_fit", r.norm_fit},
                     {"tail_fit", r.tail_fit},
                     {"beta_prime", r.beta_prime},
                     {"tail_exponent", r.tail_exponent},
                     {"beta_E", r.beta_E},
                     {"beta_D", r.beta_D},
                     {"finite_measure", r.finite_measure},
                     {"condition_literal", r.condition_literal},
                     {"condition_relaxed", r.condition_relaxed},
                     {"predicted_decay", num(r.predicted_decay)},
                     {"theory_det_slope", r.theory_det_slope},
                     {"theory_norm_slope", r.theory_norm_slope},
                     {"theory_tail_exponent", r.theory_tail_exponent},
                     {"violations", r.violations}};
}

inline Vec default_start(const LocalModel& M) {
  if (M.id == "ex73") return Vec{{0.2, 0.03}};
  return Vec::Constant(static_cast<Eigen::Index>(M.m), 0.3 / std::sqrt(static_cast<double>(M.m)));
}

/// Fits over n in [n_max/50, n_max] and evaluates the composite exponents.
inline ExponentReport exponent_report(const LocalModel& M, std::size_t n_max, double alpha,
                                      std::optional<Vec> w0 = std::nullopt) {
  if (n_max < 250) throw DomainError("exponent_report needs n_max >= 250");
  const auto orbit = inverse_orbit(M, w0 ? *w0 : default_start(M), n_max);
  const auto det = det_product(M, orbit);
  const auto nrm = norm_product(M, orbit);
  std::vector<double> tail(orbit.points.size());
  for (std::size_t k = 0; k < tail.size(); ++k) tail[k] = std::pow(orbit.points[k].norm(), M.tail_dimension);
  const std::size_t lo = n_max / 50;
  ExponentReport r;
  r.id = M.id;
  r.m = M.m;
  r.gamma = M.gamma;
  r.alpha = alpha;
  r.n_max = n_max;
  r.det_fit = fit_rate(std::span<const double>(det), 0, lo, n_max);
  r.norm_fit = fit_rate(std::span<const double>(nrm), 0, lo, n_max);
  r.tail_fit = fit_rate(std::span<const double>(tail), 0, lo, n_max);
  r.beta_prime = -r.det_fit.slope;
  r.tail_exponent = -r.tail_fit.slope;
  const double md = static_cast<double>(M.m);
  r.beta_E = r.beta_prime * (M.bounded_distortion ? 1.0 : md / (md + alpha)) - 1.0;
  r.beta_D = alpha * (-r.norm_fit.slope) - 1.0;
  r.finite_measure = r.tail_exponent > 1.0;
  r.condition_literal = r.beta_E >= std::max(2.0, r.tail_exponent - 1.0);
  r.condition_relaxed = r.beta_E > 1.0 && r.beta_E >= r.tail_exponent - 1.0;
  if (r.finite_measure && r.condition_relaxed) r.predicted_decay = r.tail_exponent - 1.0;
  r.theory_det_slope = M.det_slope;
  r.theory_norm_slope = M.norm_slope;
  r.theory_tail_exponent = M.tail_dimension / M.gamma;
  r.violations = orbit.violations;
  return r;
}

}  // namespace intermit
