#pragma once

// Correlation functions Cov(f, g∘T^n) by transfer operators and by Monte Carlo,
// the leading renewal term sum_{k>n} mu(tau > k) mu(f) mu(g), and the error
// envelope F_beta.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Sparse>

#include "intermit/error.hpp"
#include "intermit/grid.hpp"
#include "intermit/induced_system.hpp"
#include "intermit/rate_fit.hpp"
#include "intermit/transfer.hpp"
#include "intermit/ulam.hpp"

namespace intermit {

/// Cov(n) for n = 0 .. n_max with the full-map operator: sum_l (P^n (f h))_l g_l - mu(f) mu(g).
/// h is the Lebesgue density of mu on the grid; f and g must vanish outside Xhat.
inline std::vector<double> covariance_series(const UlamOperator& full_op, const GridFunction& h, const GridFunction& f,
                                             const GridFunction& g, std::size_t n_max) {
  const std::size_t N = full_op.size();
  if (h.size() != N || f.size() != N || g.size() != N)
    throw ContractError("covariance: h, f, g must live on the operator grid");
  for (std::size_t k = 0; k < full_op.xhat_begin; ++k)
    if (f.values[k] != 0.0 || g.values[k] != 0.0)
      throw ContractError("covariance: observables must be supported in Xhat");
  Eigen::VectorXd u(N), gv(N);
  double mf = 0.0, mg = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const double w = full_op.grid.width(k);
    u[k] = f.values[k] * h.values[k] * w;
    gv[k] = g.values[k];
    mf += u[k];
    mg += g.values[k] * h.values[k] * w;
  }
  std::vector<double> cov(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) {
    if (n > 0) u = full_op.push_mass(u);
    cov[n] = u.dot(gv) - mf * mg;
  }
  return cov;
}

inline double covariance_operator(const UlamOperator& full_op, const GridFunction& h, const GridFunction& f,
                                  const GridFunction& g, std::size_t n) {
  return covariance_series(full_op, h, f, g, n)[n];
}

namespace detail {

struct Entry {
  int row;
  int col;
  double value;
};

inline std::vector<Entry> entries_of(const SparseMatrix& m) {
  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(m.nonZeros()));
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(m, r); it; ++it)
      out.push_back({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()});
  return out;
}

}  // namespace detail

/// Cov(n) for n = 0 .. n_max through the renewal recursion u_n = sum_{k=1}^{n} R_k^T u_{n-k} on Xhat.
/// h_hat is the induced density (mean 1 on Xhat); f and g live on the induced grid.
inline std::vector<double> covariance_renewal(const UlamOperator& ind_op, const GridFunction& h_hat, double mu_Xhat,
                                              const GridFunction& f, const GridFunction& g, std::size_t n_max) {
  if (ind_op.kind != OperatorKind::induced) throw ContractError("covariance_renewal needs an induced operator");
  if (n_max > ind_op.n_split) throw RangeError("covariance_renewal: n_max exceeds the operator's n_split");
  const std::size_t N = ind_op.size();
  if (h_hat.size() != N || f.size() != N || g.size() != N)
    throw ContractError("covariance_renewal: h_hat, f, g must live on the induced grid");
  std::vector<std::vector<detail::Entry>> R(n_max + 1);
  for (std::size_t k = 1; k <= n_max; ++k) R[k] = detail::entries_of(ind_op.R[k - 1]);

  const double L = ind_op.grid.length();
  std::vector<std::vector<double>> u(n_max + 1, std::vector<double>(N, 0.0));
  double mf = 0.0, mg = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    const double hk = mu_Xhat * h_hat.values[k] / L;  // Lebesgue density of mu on Xhat
    const double w = ind_op.grid.width(k);
    u[0][k] = f.values[k] * hk * w;
    mf += u[0][k];
    mg += g.values[k] * hk * w;
  }
  std::vector<double> cov(n_max + 1);
  auto pair = [&](const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t k = 0; k < N; ++k) s += v[k] * g.values[k];
    return s;
  };
  cov[0] = pair(u[0]) - mf * mg;
  for (std::size_t n = 1; n <= n_max; ++n) {
    auto& un = u[n];
    for (std::size_t k = 1; k <= n; ++k) {
      const auto& prev = u[n - k];
      for (const auto& e : R[k]) un[e.col] += e.value * prev[e.row];
    }
    cov[n] = pair(un) - mf * mg;
  }
  return cov;
}

struct PredictedTerm {
  std::vector<double> values;  // n = 0 .. n_max - 1
  double tail_bound = 0.0;     // extrapolated sum over k > n_max, same for every n
  double mu_f = 0.0;
  double mu_g = 0.0;
};

/// sum_{k=n+1}^{n_max} mu(tau > k) mu(f) mu(g) with mu(tau > k) = mu_Xhat * muhat(tau > k).
inline PredictedTerm predicted_leading_term(const InducedSystem& ind, const GridFunction& h_hat, double mu_Xhat,
                                            double mu_f, double mu_g) {
  const auto tail = tail_profile(ind, &h_hat, true);  // muhat(tau > k), k = 0 .. n_max + 1
  PredictedTerm out;
  out.mu_f = mu_f;
  out.mu_g = mu_g;
  const std::size_t n_max = ind.n_max;
  out.values.assign(n_max, 0.0);
  double acc = 0.0;
  for (std::size_t n = n_max; n-- > 0;) {
    acc += mu_Xhat * tail[n + 1];
    out.values[n] = acc * mu_f * mu_g;
  }
  const double p = pullback_exponent(ind);
  const double last = mu_Xhat * tail[n_max];
  out.tail_bound = (std::isfinite(p) && p > 1.0)
                       ? std::abs(mu_f * mu_g) * last * static_cast<double>(n_max) / (p - 1.0)
                       : std::numeric_limits<double>::infinity();
  return out;
}

/// F_beta(n) = n^{-beta} (beta > 2), log(n)/n^2 (beta = 2), n^{-(2 beta - 2)} (1 < beta < 2).
inline double f_beta_envelope(double n, double beta) {
  if (!(beta > 1.0)) throw DomainError("f_beta_envelope needs beta > 1");
  if (!(n >= 2.0)) throw DomainError("f_beta_envelope needs n >= 2");
  if (beta > 2.0) return std::pow(n, -beta);
  if (beta == 2.0) return std::log(n) / (n * n);
  return std::pow(n, -(2.0 * beta - 2.0));
}

struct McEstimate {
  std::size_t lag = 0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t restarts = 0;
};

struct McOptions {
  std::size_t samples = 10'000'000;
  std::size_t burnin = 1000;
  std::uint64_t seed = 42;
  bool dither = true;  // add U[0, 2^-40) mod 1 after each step
};

/// Time-series estimator along one orbit for several lags; standard errors from 64 batch means.
inline std::vector<McEstimate> covariance_mc_series(const BranchMap& map, const std::function<double(double)>& f,
                                                    const std::function<double(double)>& g,
                                                    const std::vector<std::size_t>& lags, const McOptions& opt) {
  if (opt.samples < 1000) throw DomainError("covariance_mc needs at least 1000 samples");
  constexpr std::size_t kBatches = 64;
  std::mt19937_64 rng(opt.seed);
  auto uniform = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::size_t restarts = 0;
  double x = uniform();
  auto step = [&]() {
    x = map(x);
    if (opt.dither) {
      x += uniform() * 0x1.0p-40;
      if (x >= 1.0) x -= 1.0;
    }
    if (x >= 1.0) x = std::nextafter(1.0, 0.0);
    if (x == 0.0) {
      ++restarts;
      x = uniform();
    }
  };
  for (std::size_t k = 0; k < opt.burnin; ++k) step();

  std::size_t L = 0;
  for (auto n : lags) L = std::max(L, n);
  const std::size_t S = opt.samples;
  struct Acc {
    double fg = 0.0, f = 0.0, g = 0.0;
    std::size_t count = 0;
  };
  std::vector<std::vector<Acc>> acc(lags.size(), std::vector<Acc>(kBatches));
  std::vector<double> ring(L + 1);
  for (std::size_t t = 0; t < S + L; ++t) {
    if (t > 0) step();
    const double ft = f(x);
    const double gt = g(x);
    ring[t % (L + 1)] = ft;
    for (std::size_t q = 0; q < lags.size(); ++q) {
      const std::size_t n = lags[q];
      if (t < n) continue;
      const std::size_t k = t - n;
      if (k >= S) continue;
      const double fk = ring[k % (L + 1)];
      auto& a = acc[q][k * kBatches / S];
      a.fg += fk * gt;
      a.f += fk;
      a.g += gt;
      ++a.count;
    }
  }
  std::vector<McEstimate> out;
  for (std::size_t q = 0; q < lags.size(); ++q) {
    Acc total;
    std::vector<double> batch(kBatches);
    for (std::size_t b = 0; b < kBatches; ++b) {
      const auto& a = acc[q][b];
      total.fg += a.fg;
      total.f += a.f;
      total.g += a.g;
      total.count += a.count;
      const double c = static_cast<double>(a.count);
      batch[b] = a.fg / c - (a.f / c) * (a.g / c);
    }
    const double c = static_cast<double>(total.count);
    McEstimate e;
    e.lag = lags[q];
    e.estimate = total.fg / c - (total.f / c) * (total.g / c);
    double mean = 0.0;
    for (double v : batch) mean += v;
    mean /= kBatches;
    double var = 0.0;
    for (double v : batch) var += (v - mean) * (v - mean);
    var /= static_cast<double>(kBatches - 1);
    e.stderr_ = std::sqrt(var / kBatches);
    e.restarts = restarts;
    out.push_back(e);
  }
  return out;
}

inline McEstimate covariance_mc(const BranchMap& map, const std::function<double(double)>& f,
                                const std::function<double(double)>& g, std::size_t n, const McOptions& opt) {
  return covariance_mc_series(map, f, g, {n}, opt).front();
}

}  // namespace intermit
