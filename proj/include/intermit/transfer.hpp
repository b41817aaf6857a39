#pragma once

// Fixed densities, renewal operators R_n and R(z), the renewal identity, the
// twisted operators I - R(e^{it}), spectral gap estimates and the extension of
// the induced density to the whole interval.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <Eigen/Sparse>

#include "intermit/error.hpp"
#include "intermit/grid.hpp"
#include "intermit/induced_system.hpp"
#include "intermit/ulam.hpp"

namespace intermit {

using ComplexSparse = Eigen::SparseMatrix<std::complex<double>, Eigen::RowMajor>;
using ComplexDense = Eigen::MatrixXcd;

struct FixedDensity {
  GridFunction density;  // mean 1 over the grid interval
  double residual = 0.0;  // normalized L1 norm of P h - h
  std::size_t iterations = 0;
};

/// Power iteration from the uniform density until the L1 change is at most tol.
inline FixedDensity fixed_density(const UlamOperator& op, double tol = 1e-14, std::size_t max_iter = 1'000'000) {
  const std::size_t N = op.size();
  Eigen::VectorXd m(N);
  for (std::size_t k = 0; k < N; ++k) m[k] = op.grid.width(k) / op.grid.length();
  double change = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  while (it < max_iter) {
    Eigen::VectorXd next = op.push_mass(m);
    next /= next.sum();
    change = (next - m).lpNorm<1>();
    m = std::move(next);
    ++it;
    if (change <= tol) break;
  }
  if (change > tol)
    throw NumericalError("fixed_density: no convergence after " + std::to_string(it) +
                         " iterations, last change " + std::to_string(change));
  FixedDensity out;
  out.iterations = it;
  out.residual = (op.push_mass(m) - m).lpNorm<1>();
  Eigen::VectorXd dens = m;
  for (std::size_t k = 0; k < N; ++k) dens[k] = m[k] / op.grid.width(k) * op.grid.length();
  out.density = GridFunction(op.grid, std::vector<double>(dens.data(), dens.data() + N));
  return out;
}

/// R_n of an induced operator. Return times above tau_max give the zero matrix; return
/// times that were lumped into R_tail at construction cannot be extracted.
inline SparseMatrix extract_Rn(const UlamOperator& op, std::size_t n) {
  if (op.kind != OperatorKind::induced) throw ContractError("extract_Rn needs an induced operator");
  if (n < 1) throw RangeError("extract_Rn: n must be >= 1");
  if (n <= op.n_split) return op.R[n - 1];
  if (n > op.tau_max) return SparseMatrix(op.matrix.rows(), op.matrix.cols());
  throw RangeError("extract_Rn: return time " + std::to_string(n) + " was lumped (n_split = " +
                   std::to_string(op.n_split) + ")");
}

/// Row masses of R_n, n = 1 .. n_split, plus the lumped tail in the last slot.
inline std::vector<Eigen::VectorXd> renewal_row_masses(const UlamOperator& op) {
  std::vector<Eigen::VectorXd> out;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(op.matrix.cols());
  for (const auto& r : op.R) out.push_back(r * ones);
  out.push_back(Eigen::Map<const Eigen::VectorXd>(op.tail_row_mass.data(), static_cast<Eigen::Index>(op.tail_row_mass.size())));
  return out;
}

struct RofZ {
  ComplexSparse matrix;
  double bound = 0.0;  // max row mass left out, weighted by |z|^{n_eff + 1}
};

/// R(z) = sum_{n <= n_trunc} z^n R_n.
inline RofZ R_of_z(const UlamOperator& op, std::complex<double> z, std::size_t n_trunc) {
  if (op.kind != OperatorKind::induced) throw ContractError("R_of_z needs an induced operator");
  const std::size_t n_eff = std::min(n_trunc, op.n_split);
  const Eigen::Index N = op.matrix.rows();
  std::vector<Eigen::Triplet<std::complex<double>>> trip;
  std::complex<double> zn = 1.0;
  for (std::size_t n = 1; n <= n_eff; ++n) {
    zn *= z;
    if (zn == 0.0) break;
    const auto& R = op.R[n - 1];
    for (Eigen::Index r = 0; r < R.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(R, r); it; ++it) trip.emplace_back(it.row(), it.col(), zn * it.value());
  }
  RofZ out;
  out.matrix = ComplexSparse(N, N);
  out.matrix.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd omitted = Eigen::Map<const Eigen::VectorXd>(op.tail_row_mass.data(), N);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(N);
  for (std::size_t n = n_eff + 1; n <= op.n_split; ++n) omitted += op.R[n - 1] * ones;
  out.bound = omitted.size() ? omitted.maxCoeff() * std::pow(std::abs(z), static_cast<double>(n_eff + 1)) : 0.0;
  return out;
}

struct RenewalCheck {
  double discrepancy = 0.0;  // max entry of |T_a(z) - T_b(z)|
  double bound = 0.0;
};

/// T(z) two ways: (I - R(z))^{-1} from the induced operator, and I + sum_{n <= n_trunc} z^n T_n
/// with T_n the Xhat block of the n-th power of the full-map matrix.
inline RenewalCheck renewal_check(const UlamOperator& ind_op, const UlamOperator& full_op, std::complex<double> z,
                                  std::size_t n_trunc) {
  const double r = std::abs(z);
  if (!(r < 1.0)) throw DomainError("renewal_check needs |z| < 1");
  const Eigen::Index N = ind_op.matrix.rows();
  const auto S = static_cast<Eigen::Index>(full_op.xhat_begin);
  if (full_op.kind != OperatorKind::full || full_op.matrix.rows() - S != N || full_op.z != ind_op.z)
    throw ContractError("renewal_check: full-map grid does not match the induced grid on Xhat");

  RenewalCheck out;
  if (z == 0.0) return out;

  const auto rz = R_of_z(ind_op, z, ind_op.n_split);
  ComplexDense A = ComplexDense::Identity(N, N) - ComplexDense(rz.matrix);
  Eigen::PartialPivLU<ComplexDense> lu(A);
  const ComplexDense Ta = lu.inverse();
  if (!Ta.allFinite()) throw NumericalError("renewal_check: singular I - R(z)");

  const SparseMatrix& F = full_op.matrix;
  const Eigen::Index NF = F.rows();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(N, NF);
  for (Eigen::Index k = 0; k < N; ++k) V(k, S + k) = 1.0;
  ComplexDense Tb = ComplexDense::Identity(N, N);
  std::complex<double> zn = 1.0;
  for (std::size_t n = 1; n <= n_trunc; ++n) {
    V = V * F;
    zn *= z;
    Tb += zn * V.rightCols(N).cast<std::complex<double>>();
  }
  out.discrepancy = (Ta - Tb).cwiseAbs().maxCoeff();

  const double geo = 1.0 / (1.0 - r);
  out.bound = std::pow(r, static_cast<double>(n_trunc + 1)) * geo;  // truncation of the Neumann series
  out.bound += rz.bound * geo * geo;                                 // lumped return times
  if (full_op.markov_depth > 0 && n_trunc > full_op.markov_depth + 1)
    out.bound += 2.0 * std::pow(r, static_cast<double>(full_op.markov_depth + 2)) * geo;
  out.bound += 1e-12 * geo * geo;
  return out;
}

struct TwistedSV {
  double sigma_min = 0.0;
  double omitted_mass = 0.0;  // row mass of return times not represented in R(e^{it})
};

/// Smallest singular value of I - R(e^{it}).
inline TwistedSV twisted_min_sv(const UlamOperator& op, double t) {
  const auto rz = R_of_z(op, std::polar(1.0, t), op.n_split);
  const Eigen::Index N = op.matrix.rows();
  const ComplexDense A = ComplexDense::Identity(N, N) - ComplexDense(rz.matrix);
  Eigen::BDCSVD<ComplexDense> svd(A);
  TwistedSV out;
  out.sigma_min = svd.singularValues()(N - 1);
  out.omitted_mass = rz.bound;
  return out;
}

struct SpectralGap {
  double modulus = 0.0;  // estimate of |lambda_2|
  double lower = 0.0;
  double upper = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Deflated power iteration on masses: iterates stay orthogonal to the constant left eigenvector
/// and are projected off the fixed density.
inline SpectralGap spectral_gap(const UlamOperator& op, std::size_t max_iter = 20000, double tol = 1e-6,
                                std::uint64_t seed = 42) {
  const auto fd = fixed_density(op, 1e-14);
  const std::size_t N = op.size();
  Eigen::VectorXd h = op.to_mass(fd.density);
  h /= h.sum();
  std::mt19937_64 rng(seed);
  Eigen::VectorXd v(N);
  for (std::size_t k = 0; k < N; ++k) v[k] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  v -= v.sum() * h;
  v /= v.lpNorm<1>();

  constexpr std::size_t kWindow = 64;
  std::vector<double> logs;
  SpectralGap out;
  double prev_est = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t it = 1; it <= max_iter; ++it) {
    v = op.push_mass(v);
    v -= v.sum() * h;
    const double norm = v.lpNorm<1>();
    out.iterations = it;
    if (!(norm > 1e-13)) {
      out.modulus = out.lower = out.upper = 0.0;
      out.converged = true;
      return out;
    }
    v /= norm;
    logs.push_back(std::log(norm));
    if (logs.size() >= kWindow && logs.size() % kWindow == 0) {
      double s = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t k = logs.size() - kWindow; k < logs.size(); ++k) {
        s += logs[k];
        lo = std::min(lo, logs[k]);
        hi = std::max(hi, logs[k]);
      }
      const double est = std::exp(s / kWindow);
      out.modulus = est;
      out.lower = std::exp(lo);
      out.upper = std::exp(hi);
      if (std::abs(est - prev_est) <= tol) {
        out.converged = true;
        return out;
      }
      prev_est = est;
    }
  }
  return out;
}

struct ExtendedDensity {
  GridFunction h;               // Lebesgue density on the full grid, integral 1
  double mu_Xhat = 1.0;         // mu(Xhat)
  double truncation_bound = 0.0;  // relative mass not accounted for after n_trunc steps
  double projection_slack = 0.0;  // L1 gap between returning mass and hhat
  double residual = 0.0;          // L1 norm of P h - h
  std::size_t steps = 0;
};

/// h proportional to sum_{n >= 0} P^n(hhat 1_{tau > n}), computed on the full-map grid.
/// h_hat is a density on Xhat with mean 1 on the grid of the induced operator.
inline ExtendedDensity extend_density(const UlamOperator& full_op, const InducedSystem& ind, const GridFunction& h_hat,
                                      std::size_t n_trunc) {
  const std::size_t S = full_op.xhat_begin;
  const std::size_t NF = full_op.size();
  if (NF - S != h_hat.size()) throw ContractError("extend_density: h_hat grid does not match the full-map Xhat cells");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(NF));
  for (std::size_t k = 0; k < h_hat.size(); ++k) g[S + k] = h_hat.values[k] * h_hat.grid.width(k) / h_hat.grid.length();
  const Eigen::VectorXd g0 = g;
  Eigen::VectorXd acc = g;
  Eigen::VectorXd returned = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(NF));
  double total = g.sum();
  ExtendedDensity out;
  for (std::size_t n = 1; n <= n_trunc; ++n) {
    g = full_op.push_mass(g);
    returned.tail(NF - S) += g.tail(NF - S);
    g.tail(NF - S).setZero();
    out.steps = n;
    const double mass = g.sum();
    if (!(mass > 0.0)) break;
    acc += g;
    total += mass;
  }
  const double left = g.sum();
  if (left > 0.0) {
    const double p = pullback_exponent(ind);
    const double n = static_cast<double>(out.steps);
    out.truncation_bound = (std::isfinite(p) && p > 1.0) ? left * n / (p - 1.0) / total
                                                         : std::numeric_limits<double>::infinity();
  }
  out.mu_Xhat = g0.sum() / total;
  acc /= total;
  out.projection_slack = (returned - g0).lpNorm<1>();
  out.residual = (full_op.push_mass(acc) - acc).lpNorm<1>();
  out.h = full_op.from_mass(acc);
  return out;
}

}  // namespace intermit
