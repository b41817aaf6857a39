#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "intermit/norms.hpp"
#include "intermit/transfer.hpp"

using namespace intermit;

namespace {

const InducedSystem& pm3_ind() {
  static const InducedSystem ind = build_induced(make_pm3(), 0.1, 5000);
  return ind;
}

const UlamOperator& pm3_op_1024() {
  static const UlamOperator op = ulam_induced(pm3_ind(), 1024);
  return op;
}

const InducedSystem& doubling_ind() {
  static const InducedSystem ind = build_induced(make_doubling(), 0.0, 10);
  return ind;
}

Eigen::MatrixXd dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

}  // namespace

TEST(Ulam, DoublingTwoCells) {
  const auto op = ulam_matrix(make_doubling(), 2);
  const Eigen::MatrixXd M = dense(op.matrix);
  ASSERT_EQ(M.rows(), 2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(M(r, c), 0.5, 1e-15);
}

TEST(Ulam, RowSumsAndSigns) {
  for (const auto* op : {&pm3_op_1024()}) {
    EXPECT_LE(row_sum_defect(op->matrix), 1e-12);
    for (Eigen::Index r = 0; r < op->matrix.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(op->matrix, r); it; ++it) ASSERT_GE(it.value(), 0.0);
  }
  FullGridOptions markov;
  markov.j_grid = FullGridOptions::J::markov;
  EXPECT_LE(row_sum_defect(ulam_full(pm3_ind(), 256, markov).matrix), 1e-12);
  EXPECT_LE(row_sum_defect(ulam_full(pm3_ind(), 256).matrix), 1e-12);
  FullGridOptions geo;
  geo.j_grid = FullGridOptions::J::geometric;
  EXPECT_LE(row_sum_defect(ulam_full(pm3_ind(), 256, geo).matrix), 1e-12);
  EXPECT_LE(row_sum_defect(ulam_matrix(make_lsv(), 300).matrix), 1e-12);
}

TEST(Ulam, ReturnTimeOneMassMatchesTail) {
  const auto& op = pm3_op_1024();
  const Eigen::VectorXd rows = op.R[0] * Eigen::VectorXd::Ones(op.size());
  double mass = 0.0;
  for (std::size_t k = 0; k < op.size(); ++k) mass += op.grid.width(k) * rows[k];
  EXPECT_NEAR(mass, tail_measure(pm3_ind(), 0) - tail_measure(pm3_ind(), 1), 1e-8);
}

TEST(Ulam, RenewalPiecesReconstructMatrix) {
  const auto& op = pm3_op_1024();
  SparseMatrix sum(op.matrix.rows(), op.matrix.cols());
  for (const auto& r : op.R) sum += r;
  const double gap = (dense(sum) - dense(op.matrix)).cwiseAbs().maxCoeff();
  double sliver = 0.0;
  for (double v : op.sliver_row_mass) sliver = std::max(sliver, v);
  EXPECT_LE(gap, sliver + 1e-14);

  InducedUlamOptions o;
  o.n_split = 10;
  const auto lumped = ulam_induced(pm3_ind(), 256, o);
  SparseMatrix s2(lumped.matrix.rows(), lumped.matrix.cols());
  for (const auto& r : lumped.R) s2 += r;
  const Eigen::VectorXd tail = Eigen::Map<const Eigen::VectorXd>(lumped.tail_row_mass.data(), lumped.size());
  const Eigen::VectorXd rows = (dense(lumped.matrix) - dense(s2)).rowwise().sum();
  EXPECT_LE((rows - tail).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Extract, DoublingReturnsOnlyAtOne) {
  const auto op = ulam_induced(doubling_ind(), 8);
  EXPECT_LE((dense(extract_Rn(op, 1)) - dense(op.matrix)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(extract_Rn(op, 2).nonZeros(), 0);
  EXPECT_THROW(extract_Rn(op, 0), RangeError);
}

TEST(Extract, LumpedReturnTimeThrows) {
  InducedUlamOptions o;
  o.n_split = 5;
  const auto op = ulam_induced(pm3_ind(), 128, o);
  EXPECT_NO_THROW(extract_Rn(op, 5));
  EXPECT_THROW(extract_Rn(op, 6), RangeError);
}

TEST(Extract, RnProxyNormFollowsDn) {
  const auto& op = pm3_op_1024();
  const auto dn = pm3_ind().d_n();
  double lo = 1e300, hi = 0.0;
  for (std::size_t n = 10; n <= 200; n += 10) {
    const double ratio = rn_bv_proxy_norm(op, extract_Rn(op, n), 20, n) / dn[n - 1];
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi / lo, 10.0);
}

TEST(RofZ, ZeroAndOne) {
  const auto& op = pm3_op_1024();
  EXPECT_EQ(R_of_z(op, 0.0, 100).matrix.nonZeros(), 0);
  const auto r1 = R_of_z(op, 1.0, op.n_split);
  const Eigen::MatrixXcd diff = Eigen::MatrixXcd(r1.matrix) - dense(op.matrix).cast<std::complex<double>>();
  EXPECT_LE(diff.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RofZ, DoublingAtMinusOne) {
  const auto op = ulam_induced(doubling_ind(), 2);
  const auto rz = R_of_z(op, std::polar(1.0, std::numbers::pi), 10);
  const Eigen::MatrixXcd expect = -dense(op.matrix).cast<std::complex<double>>();
  EXPECT_LE((Eigen::MatrixXcd(rz.matrix) - expect).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(twisted_min_sv(op, std::numbers::pi).sigma_min, 1.0, 1e-12);
}

TEST(RofZ, ContractionInL1) {
  InducedUlamOptions o;
  o.n_split = 200;
  const auto op = ulam_induced(pm3_ind(), 512, o);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-1.0, 1.0), R(0.0, 1.0), T(0.0, 2 * std::numbers::pi);
  for (int trial = 0; trial < 100; ++trial) {
    const std::complex<double> z = std::polar(R(rng), T(rng));
    const auto rz = R_of_z(op, z, 200);
    Eigen::VectorXcd m(op.size());
    for (auto& v : m) v = {U(rng), U(rng)};
    const Eigen::VectorXcd out = rz.matrix.transpose() * m;
    ASSERT_LE(out.lpNorm<1>(), std::abs(z) * m.lpNorm<1>() * (1 + 1e-12));
  }
}

TEST(FixedDensity, DoublingAndEqualSlopeAreUniform) {
  for (const auto& T : {make_doubling(), make_equal_slope(3)}) {
    const auto fd = fixed_density(ulam_matrix(T, 300));
    for (double v : fd.density.values) EXPECT_NEAR(v, 1.0, 1e-12);
  }
}

TEST(FixedDensity, Pm3BoundedAndStable) {
  InducedUlamOptions o;
  o.n_split = 1;
  const auto a = fixed_density(ulam_induced(pm3_ind(), 4096, o));
  const auto b = fixed_density(ulam_induced(pm3_ind(), 16384, o));
  EXPECT_LE(a.residual, 1e-10);
  EXPECT_NEAR(a.density.mean(), 1.0, 1e-12);
  double mx = 0.0, mn = 1e300, mxb = 0.0;
  for (double v : a.density.values) {
    ASSERT_GE(v, 0.0);
    mx = std::max(mx, v);
    mn = std::min(mn, v);
  }
  for (double v : b.density.values) mxb = std::max(mxb, v);
  EXPECT_GT(mn, 0.0);
  EXPECT_LT(mx / mn, 10.0);
  EXPECT_NEAR(mx / mxb, 1.0, 0.05);
}

TEST(Renewal, DoublingGeometricTruncation) {
  const auto ind_op = ulam_induced(doubling_ind(), 64);
  const auto full_op = ulam_matrix(make_doubling(), 64);
  EXPECT_LE(renewal_check(ind_op, full_op, 0.5, 30).discrepancy, 1e-8);
  EXPECT_EQ(renewal_check(ind_op, full_op, 0.0, 30).discrepancy, 0.0);
  EXPECT_THROW(renewal_check(ind_op, full_op, 1.0, 30), DomainError);
}

TEST(Renewal, Pm3BelowReportedBound) {
  InducedUlamOptions o;
  o.n_split = 60;
  const auto ind_op = ulam_induced(pm3_ind(), 256, o);
  FullGridOptions fo;
  fo.j_grid = FullGridOptions::J::markov;
  const auto full_op = ulam_full(pm3_ind(), 256, fo);
  const auto r = renewal_check(ind_op, full_op, std::complex<double>(0.3, 0.4), 40);
  EXPECT_LE(r.discrepancy, r.bound);
}

TEST(Twisted, ZeroAtTrivialCharacterPositiveElsewhere) {
  const auto op = ulam_induced(pm3_ind(), 256);
  EXPECT_LE(twisted_min_sv(op, 0.0).sigma_min, 1e-10);
  EXPECT_GE(twisted_min_sv(op, std::numbers::pi).sigma_min, 0.05);
}

TEST(SpectralGap, ClosedFormCases) {
  EXPECT_EQ(spectral_gap(ulam_matrix(make_doubling(), 2)).modulus, 0.0);
  const auto g = spectral_gap(ulam_matrix(make_equal_slope(3), 729));
  EXPECT_LT(g.modulus, 2.0 / 3.0);
}

TEST(SpectralGap, Pm3Induced) {
  InducedUlamOptions o;
  o.n_split = 1;
  const auto g = spectral_gap(ulam_induced(pm3_ind(), 4096, o));
  EXPECT_TRUE(g.converged);
  EXPECT_LT(g.modulus, 1.0 - 1e-3);
}

TEST(Extend, DoublingIsTrivial) {
  const auto ind_op = ulam_induced(doubling_ind(), 32);
  const auto full_op = ulam_matrix(make_doubling(), 32);
  const auto fd = fixed_density(ind_op);
  const auto ext = extend_density(full_op, doubling_ind(), fd.density, 10);
  EXPECT_NEAR(ext.mu_Xhat, 1.0, 1e-14);
  for (std::size_t k = 0; k < 32; ++k) EXPECT_NEAR(ext.h.values[k], fd.density.values[k], 1e-12);
}

TEST(Extend, Pm3ResidualKacAndBlowUp) {
  FullGridOptions fo;
  fo.j_grid = FullGridOptions::J::markov;
  const auto ind_op = ulam_induced(pm3_ind(), 512);
  const auto fd = fixed_density(ind_op);
  const auto full_op = ulam_full(pm3_ind(), 512, fo);
  const auto ext = extend_density(full_op, pm3_ind(), fd.density, 20000);
  EXPECT_NEAR(ext.h.integral(), 1.0, 1e-10);
  EXPECT_LE(ext.residual, 5.0 * (ext.truncation_bound + ext.projection_slack) + 1e-12);
  EXPECT_NEAR(kac_check(pm3_ind(), fd.density, ext.mu_Xhat).value, 1.0, 0.02);

  double prev = 0.0;
  for (std::size_t n : {128u, 256u, 512u}) {
    const auto io = ulam_induced(pm3_ind(), n);
    const auto fo2 = ulam_full(pm3_ind(), n);
    const auto e = extend_density(fo2, pm3_ind(), fixed_density(io).density, 20000);
    EXPECT_NEAR(e.h.integral(), 1.0, 1e-10);
    EXPECT_GT(e.h.values[0], prev);
    prev = e.h.values[0];
  }
}
