#include <gtest/gtest.h>

#include <cmath>

#include "intermit/scaling_laws.hpp"

using namespace intermit;

namespace {

double slope(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  return fit_rate(std::span<const double>(v), 0, lo, hi).slope;
}

}  // namespace

TEST(InverseOrbit, RadialAsymptotics) {
  const auto M = make_radial(1.0, 2);
  const auto o = inverse_orbit(M, Vec{{0.2, 0.0}}, 5000);
  EXPECT_NEAR(o.points.back().norm() * 5000.0, 1.0, 0.1);
  EXPECT_LE(o.max_residual, 1e-12);
  for (std::size_t k = 1; k < o.points.size(); ++k) ASSERT_LT(o.points[k].norm(), o.points[k - 1].norm());
}

TEST(InverseOrbit, RadialGammaHalf) {
  const double g = 0.5;
  const auto o = inverse_orbit(make_radial(g, 1), Vec{{0.3}}, 20000);
  EXPECT_NEAR(o.points.back().norm() * std::pow(g * 20000.0, 1.0 / g), 1.0, 0.1);
}

TEST(InverseOrbit, OriginIsFixed) {
  const auto o = inverse_orbit(make_ex71(), Vec::Zero(3), 50);
  ASSERT_EQ(o.points.size(), 51u);
  for (const auto& p : o.points) EXPECT_EQ(p.norm(), 0.0);
}

TEST(InverseOrbit, WrongDimensionAndConstraint) {
  EXPECT_THROW(inverse_orbit(make_ex71(), Vec::Zero(2), 5), DomainError);
  EXPECT_THROW(inverse_orbit(make_ex73(), Vec{{0.1, 0.5}}, 5), DomainError);
}

TEST(InverseOrbit, CuspConstraintPreserved) {
  const auto M = make_ex73();
  const auto o = inverse_orbit(M, default_start(M), 3000);
  EXPECT_EQ(o.violations, 0u);
  for (const auto& p : o.points) ASSERT_TRUE(M.constraint(p));
  EXPECT_LE(o.max_residual, 1e-12);
}

TEST(Factories, RejectBadParameters) {
  EXPECT_THROW(make_radial(0.0, 2), ConstructionError);
  EXPECT_THROW(make_ex74(2, 1.0), ConstructionError);
  EXPECT_THROW(make_ex74(3, 3.0), ConstructionError);
  EXPECT_THROW(make_ex72(1.5), ConstructionError);
}

TEST(Products, DeterminantSlopes) {
  struct Case {
    LocalModel M;
    double expect;
  };
  for (const auto& c : {Case{make_ex71(), -3.0}, Case{make_ex74(3, 1.0), -4.0}, Case{make_ex73(), -2.5},
                        Case{make_ex72(0.5), -7.0}}) {
    const auto o = inverse_orbit(c.M, default_start(c.M), 5000);
    EXPECT_NEAR(slope(det_product(c.M, o), 100, 5000), c.expect, 0.1) << c.M.id;
    EXPECT_NEAR(c.M.det_slope, c.expect, 1e-12) << c.M.id;
  }
}

TEST(Products, NormSlopes) {
  const auto r2 = make_radial(0.5, 2);
  EXPECT_NEAR(slope(norm_product(r2, inverse_orbit(r2, default_start(r2), 5000)), 100, 5000), -2.0, 0.1);
  const auto r1 = make_radial(0.5, 1);
  EXPECT_NEAR(slope(norm_product(r1, inverse_orbit(r1, default_start(r1), 5000)), 100, 5000), -3.0, 0.1);
  const auto e71 = make_ex71();
  EXPECT_NEAR(slope(norm_product(e71, inverse_orbit(e71, default_start(e71), 5000)), 100, 5000), -0.5, 0.05);
}

TEST(Products, OneDimensionalChainRule) {
  // in dimension one the norm and the determinant coincide
  const auto M = make_radial(0.7, 1);
  const auto o = inverse_orbit(M, Vec{{0.4}}, 500);
  const auto d = det_product(M, o), n = norm_product(M, o);
  for (std::size_t k = 0; k < d.size(); ++k) ASSERT_NEAR(n[k] / d[k], 1.0, 1e-10);
}

TEST(Products, DeterminantBelowNormPower) {
  for (const auto& M : {make_ex71(), make_ex73(), make_ex72(0.5), make_radial(0.5, 2)}) {
    const auto o = inverse_orbit(M, default_start(M), 2000);
    const auto d = det_product(M, o), n = norm_product(M, o);
    for (std::size_t k = 0; k < d.size(); ++k)
      ASSERT_LE(d[k], std::pow(n[k], static_cast<double>(M.m)) * (1 + 1e-10)) << M.id << " n=" << k;
  }
}

TEST(Products, RadialTangentialProduct) {
  const double g = 0.5;
  const auto M = make_radial(g, 2);
  const auto o = inverse_orbit(M, Vec{{0.1, 0.2}}, 3000);
  const auto n = norm_product(M, o);
  double p = 1.0;
  for (std::size_t k = 1; k < o.points.size(); ++k) {
    p /= 1.0 + std::pow(o.points[k].norm(), g);
    ASSERT_NEAR(n[k] / p, 1.0, 1e-9) << k;
  }
}

TEST(Exponents, CubicExampleNeedsRelaxedCondition) {
  const auto r = exponent_report(make_ex71(), 5000, 1.0);
  EXPECT_NEAR(r.beta_prime, 3.0, 0.1);
  EXPECT_NEAR(r.beta_E, 1.25, 0.1);
  EXPECT_NEAR(r.tail_exponent, 1.5, 0.05);
  EXPECT_TRUE(r.finite_measure);
  EXPECT_FALSE(r.condition_literal);
  EXPECT_TRUE(r.condition_relaxed);
  EXPECT_NEAR(r.predicted_decay, 0.5, 0.05);
  EXPECT_NEAR(r.theory_tail_exponent, 1.5, 1e-12);
}

TEST(Exponents, AnisotropicPlane) {
  const auto r = exponent_report(make_ex72(0.5), 5000, 1.0);
  EXPECT_NEAR(-r.det_fit.slope, 7.0, 0.1);
  EXPECT_NEAR(r.norm_fit.slope, -3.0, 0.1);
  EXPECT_NEAR(r.tail_exponent, 4.0, 0.1);
  EXPECT_TRUE(r.condition_relaxed);
  const auto a = exponent_report(make_ex72(0.5), 5000, 0.5);
  EXPECT_NEAR(a.beta_E, 7.0 * 2.0 / 2.5 - 1.0, 0.1);
  EXPECT_GT(a.beta_E, 2.0 / 0.5 - 1.0);
}

TEST(Exponents, InfiniteMeasureHasNoPrediction) {
  const auto r = exponent_report(make_radial(2.0, 1), 5000, 1.0);
  EXPECT_NEAR(r.tail_exponent, 0.5, 0.05);
  EXPECT_FALSE(r.finite_measure);
  EXPECT_TRUE(std::isnan(r.predicted_decay));
  nlohmann::json j = r;
  EXPECT_TRUE(j["predicted_decay"].is_null());
}

TEST(Exponents, ShortHorizonRejected) { EXPECT_THROW(exponent_report(make_ex71(), 100, 1.0), DomainError); }
