#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "intermit/decay.hpp"

using namespace intermit;

namespace {

const InducedSystem& pm3_ind() {
  static const InducedSystem ind = build_induced(make_pm3(), 0.1, 5000);
  return ind;
}

struct Pm3Setup {
  UlamOperator ind_op;
  FixedDensity fd;
  UlamOperator full_op;
  ExtendedDensity ext;
};

const Pm3Setup& pm3_setup() {
  static const Pm3Setup s = [] {
    InducedUlamOptions o;
    o.n_split = 400;
    Pm3Setup s{ulam_induced(pm3_ind(), 2048, o), {}, {}, {}};
    s.fd = fixed_density(s.ind_op);
    FullGridOptions fo;
    fo.j_grid = FullGridOptions::J::markov;
    s.full_op = ulam_full(pm3_ind(), 2048, fo);
    s.ext = extend_density(s.full_op, pm3_ind(), s.fd.density, 20000);
    return s;
  }();
  return s;
}

// observable supported on Xhat, lifted to the full-map grid
GridFunction lift(const UlamOperator& full_op, const GridFunction& f_hat) {
  GridFunction out(full_op.grid, 0.0);
  for (std::size_t k = 0; k < f_hat.size(); ++k) out.values[full_op.xhat_begin + k] = f_hat.values[k];
  return out;
}

double window(double x) { return (x >= 0.55 && x <= 0.95) ? 1.0 : 0.0; }

}  // namespace

TEST(CovarianceOperator, DoublingAnalytic) {
  const auto op = ulam_matrix(make_doubling(), 1 << 14);
  const GridFunction h(op.grid, 1.0);
  const auto f = project(op.grid, [](double x) { return x - 0.5; });
  const auto cov = covariance_series(op, h, f, f, 8);
  for (std::size_t n = 0; n <= 8; ++n) {
    const double exact = 1.0 / (12.0 * std::pow(2.0, static_cast<double>(n)));
    EXPECT_NEAR(cov[n] / exact, 1.0, 0.05) << "n=" << n;
  }
  EXPECT_NEAR(cov[1], 0.0416667, 1e-5);
  EXPECT_NEAR(cov[8], 3.2552e-4, 0.05 * 3.2552e-4);
  EXPECT_EQ(covariance_operator(op, h, f, f, 3), cov[3]);
}

TEST(CovarianceOperator, ConstantObservableCancels) {
  // f = 1 has the whole space as support only when Xhat = X, as for full-branch maps
  for (const auto& T : {make_doubling(), make_equal_slope(3)}) {
    const auto op = ulam_matrix(T, 243);
    const GridFunction h(op.grid, 1.0), one(op.grid, 1.0);
    const auto g = project(op.grid, [](double x) { return std::sin(7 * x); });
    for (double c : covariance_series(op, h, one, g, 20)) EXPECT_NEAR(c, 0.0, 1e-12);
  }
}

TEST(CovarianceOperator, VarianceMatchesQuadrature) {
  const auto& s = pm3_setup();
  const auto f = lift(s.full_op, indicator(s.ind_op.grid, 0.55, 0.95));
  double mf = 0.0, ff = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double w = s.ext.h.values[k] * s.full_op.grid.width(k);
    mf += f.values[k] * w;
    ff += f.values[k] * f.values[k] * w;
  }
  EXPECT_NEAR(covariance_operator(s.full_op, s.ext.h, f, f, 0), ff - mf * mf, 1e-10);
}

TEST(CovarianceOperator, SupportOutsideXhatRejected) {
  const auto& s = pm3_setup();
  const GridFunction everywhere(s.full_op.grid, 1.0);
  EXPECT_THROW(covariance_operator(s.full_op, s.ext.h, everywhere, everywhere, 1), ContractError);
}

TEST(CovarianceOperator, Bilinear) {
  const auto& s = pm3_setup();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  auto random_obs = [&] {
    GridFunction f(s.ind_op.grid, 0.0);
    for (auto& v : f.values) v = U(rng);
    return lift(s.full_op, f);
  };
  for (int t = 0; t < 5; ++t) {
    const auto f1 = random_obs(), f2 = random_obs(), g = random_obs();
    const double a = U(rng), b = U(rng);
    GridFunction comb = f1;
    for (std::size_t k = 0; k < comb.size(); ++k) comb.values[k] = a * f1.values[k] + b * f2.values[k];
    const double lhs = covariance_operator(s.full_op, s.ext.h, comb, g, 5);
    const double rhs = a * covariance_operator(s.full_op, s.ext.h, f1, g, 5) + b * covariance_operator(s.full_op, s.ext.h, f2, g, 5);
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(CovarianceRenewal, AgreesWithFullOperator) {
  const auto& s = pm3_setup();
  const auto f = indicator(s.ind_op.grid, 0.55, 0.95);
  const auto g = project(s.ind_op.grid, [](double x) { return x * x; });
  const auto a = covariance_renewal(s.ind_op, s.fd.density, s.ext.mu_Xhat, f, g, 50);
  const auto b = covariance_series(s.full_op, s.ext.h, lift(s.full_op, f), lift(s.full_op, g), 50);
  for (std::size_t n = 0; n <= 50; ++n) EXPECT_NEAR(a[n], b[n], 1e-6 * std::abs(b[0])) << "n=" << n;
}

TEST(CovarianceRenewal, NeedsSplitReturnTimes) {
  const auto& s = pm3_setup();
  const auto f = indicator(s.ind_op.grid, 0.55, 0.95);
  EXPECT_THROW(covariance_renewal(s.ind_op, s.fd.density, s.ext.mu_Xhat, f, f, 401), RangeError);
}

TEST(CovarianceRenewal, Pm3RatioAndSlope) {
  const auto& s = pm3_setup();
  const auto f = indicator(s.ind_op.grid, 0.55, 0.95);
  const double mu = 1.0 / mean_return_time(pm3_ind(), &s.fd.density);  // stationary Xhat mass of the renewal chain
  const auto cov = covariance_renewal(s.ind_op, s.fd.density, mu, f, f, 300);
  double mf = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) mf += f.values[k] * mu * s.fd.density.values[k] / s.ind_op.grid.length() * s.ind_op.grid.width(k);
  const auto pred = predicted_leading_term(pm3_ind(), s.fd.density, mu, mf, mf);
  for (std::size_t n = 30; n <= 300; ++n) {
    const double r = cov[n] / pred.values[n];
    ASSERT_GE(r, 0.5) << n;
    ASSERT_LE(r, 2.0) << n;
  }
  const auto fit = fit_rate(std::span<const double>(cov), 0, 30, 300);
  EXPECT_NEAR(fit.slope, -1.0, 0.25);
}

TEST(Predicted, MeanZeroVanishesAndMonotone) {
  const auto& s = pm3_setup();
  const auto zero = predicted_leading_term(pm3_ind(), s.fd.density, s.ext.mu_Xhat, 0.0, 0.4);
  for (double v : zero.values) ASSERT_EQ(v, 0.0);
  const auto p = predicted_leading_term(pm3_ind(), s.fd.density, s.ext.mu_Xhat, 0.3, 0.3);
  for (std::size_t n = 1; n < p.values.size(); ++n) ASSERT_LE(p.values[n], p.values[n - 1]);
  const auto fit = fit_rate(std::span<const double>(p.values), 0, 20, 1000);
  EXPECT_NEAR(fit.slope, -1.0, 0.1);
  EXPECT_GT(p.tail_bound, 0.0);
}

TEST(Envelope, ThreeBranches) {
  EXPECT_DOUBLE_EQ(f_beta_envelope(10, 3.0), 1e-3);
  EXPECT_DOUBLE_EQ(f_beta_envelope(10, 2.0), std::log(10.0) / 100.0);
  EXPECT_NEAR(f_beta_envelope(10, 2.0), 0.02302585, 1e-8);
  EXPECT_DOUBLE_EQ(f_beta_envelope(10, 1.5), 0.1);
  EXPECT_THROW(f_beta_envelope(10, 1.0), DomainError);
  EXPECT_THROW(f_beta_envelope(1, 3.0), DomainError);
}

TEST(RateFitting, ExactAndPerturbedPowerLaws) {
  std::vector<double> a(1001), b(1001);
  for (std::size_t n = 1; n <= 1000; ++n) {
    a[n] = 7.0 * std::pow(static_cast<double>(n), -2.0);
    b[n] = (1.0 + 1.0 / n) / n;
  }
  EXPECT_NEAR(fit_rate(std::span<const double>(a), 0, 1, 1000).slope, -2.0, 1e-12);
  const double s = fit_rate(std::span<const double>(b), 0, 100, 1000).slope;
  EXPECT_GT(s, -1.02);
  EXPECT_LT(s, -0.98);
}

TEST(RateFitting, NonPositiveEntriesSkipped) {
  std::vector<double> alt(20);
  for (std::size_t n = 0; n < alt.size(); ++n) alt[n] = (n % 2 ? -1.0 : 1.0) / (n + 1.0);
  EXPECT_NO_THROW(fit_rate(std::span<const double>(alt), 0, 0, 19));
  EXPECT_THROW(fit_rate(std::span<const double>(alt), 0, 0, 7), InsufficientDataError);
}

TEST(MonteCarlo, DoublingAnalytic) {
  const auto T = make_doubling();
  auto f = [](double x) { return x - 0.5; };
  McOptions o;
  o.samples = 10'000'000;
  o.seed = 7;
  const auto est = covariance_mc_series(T, f, f, {0, 1, 2, 3, 4, 5}, o);
  for (const auto& e : est) {
    const double exact = 1.0 / (12.0 * std::pow(2.0, static_cast<double>(e.lag)));
    EXPECT_LE(std::abs(e.estimate - exact), 3.0 * e.stderr_) << "n=" << e.lag;
  }
  EXPECT_NEAR(est[3].estimate, 0.0104167, 3.0 * est[3].stderr_);
}

TEST(MonteCarlo, ConstantObservableAndDeterminism) {
  const auto T = make_pm3();
  McOptions o;
  o.samples = 100'000;
  o.seed = 99;
  const auto c = covariance_mc(T, [](double) { return 2.0; }, [](double x) { return x; }, 2, o);
  EXPECT_LE(std::abs(c.estimate), 3.0 * c.stderr_ + 1e-14);
  const auto a = covariance_mc(T, window, window, 4, o);
  const auto b = covariance_mc(T, window, window, 4, o);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.stderr_, b.stderr_);
  EXPECT_THROW(covariance_mc(T, window, window, 1, McOptions{999, 0, 1, true}), DomainError);
}

TEST(MonteCarlo, AgreesWithOperatorOnPm3) {
  const auto& s = pm3_setup();
  const auto f = indicator(s.ind_op.grid, 0.55, 0.95);
  const auto cov = covariance_renewal(s.ind_op, s.fd.density, 1.0 / mean_return_time(pm3_ind(), &s.fd.density), f, f, 10);
  McOptions o;
  o.samples = 10'000'000;
  o.seed = 2024;
  const auto mc = covariance_mc_series(make_pm3(), window, window, {0, 1, 2, 5, 10}, o);
  for (const auto& e : mc) {
    const double discretization = 2e-3 * cov[0];
    EXPECT_LE(std::abs(e.estimate - cov[e.lag]), 3.0 * (e.stderr_ + discretization)) << "n=" << e.lag;
  }
}
