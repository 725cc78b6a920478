#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "longsim/corrspec.hpp"
#include "longsim/rng.hpp"

using namespace longsim;

namespace {

// P(Z1 <= h, Z2 <= k) as the integral over z1 of phi(z1) Phi((k - rho z1) / sqrt(1 - rho^2)).
double bvn_oracle(double h, double k, double rho) {
  const boost::math::normal_distribution<double> nd;
  const double s = std::sqrt(1.0 - rho * rho);
  auto f = [&](double x) { return boost::math::pdf(nd, x) * boost::math::cdf(nd, (k - rho * x) / s); };
  const double lo = -40.0;
  if (h <= lo) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, std::min(h, 40.0), 15, 1e-15);
}

double phi_inv(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

}  // namespace

TEST(BvnCdf, MatchesQuadratureOracle) {
  const double hs[] = {-3.0, -1.2, -0.3, 0.0, 0.4, 1.7, 2.9};
  const double rhos[] = {-0.999, -0.95, -0.7, -0.3, -0.05, 0.0, 0.1, 0.5, 0.8, 0.925, 0.97, 0.999};
  for (double h : hs)
    for (double k : hs)
      for (double r : rhos) EXPECT_NEAR(bvn_cdf(h, k, r), bvn_oracle(h, k, r), 2e-13) << h << " " << k << " " << r;
}

TEST(BvnCdf, OrthantClosedForm) {
  for (double r = -0.99; r < 1.0; r += 0.03)
    EXPECT_NEAR(bvn_cdf(0, 0, r), 0.25 + std::asin(r) / (2 * std::numbers::pi), 1e-15);
}

TEST(BvnCdf, InfiniteLimitsAndDomain) {
  const double inf = std::numeric_limits<double>::infinity();
  const boost::math::normal_distribution<double> nd;
  EXPECT_NEAR(bvn_cdf(0.7, inf, 0.4), boost::math::cdf(nd, 0.7), 1e-15);
  EXPECT_NEAR(bvn_cdf(-inf, 0.2, 0.4), 0.0, 1e-300);
  EXPECT_NEAR(bvn_cdf(inf, inf, -0.4), 1.0, 1e-15);
  EXPECT_THROW(bvn_cdf(0, 0, 1.0), std::domain_error);
  EXPECT_THROW(bvn_cdf(0, 0, -1.5), std::domain_error);
}

TEST(Bounds, PointBiserial) {
  const boost::math::normal_distribution<double> nd;
  for (double p : {0.01, 0.1, 0.3, 0.5, 0.69, 0.97}) {
    const double want = boost::math::pdf(nd, phi_inv(p)) / std::sqrt(p * (1 - p));
    EXPECT_NEAR(max_corr_bin_norm(p), want, 1e-14);
  }
  EXPECT_NEAR(max_corr_bin_norm(0.5), std::sqrt(2 / std::numbers::pi), 1e-15);
  Diagnostics d;
  EXPECT_EQ(max_corr_bin_norm(0.0, &d), 0.0);
  EXPECT_EQ(max_corr_bin_norm(1.0, &d), 0.0);
  EXPECT_EQ(d.count(), 2u);
}

TEST(Bounds, BinaryBinaryFrechet) {
  // Brute-force extremes of the 2x2 table with fixed margins.
  for (double p1 : {0.1, 0.2, 0.5, 0.7})
    for (double p2 : {0.05, 0.3, 0.5, 0.9}) {
      const double p11_max = std::min(p1, p2), p11_min = std::max(0.0, p1 + p2 - 1.0);
      const double sd = std::sqrt(p1 * (1 - p1) * p2 * (1 - p2));
      const CorrBounds b = max_corr_bin_bin(p1, p2);
      EXPECT_NEAR(b.hi, (p11_max - p1 * p2) / sd, 1e-14);
      EXPECT_NEAR(b.lo, (p11_min - p1 * p2) / sd, 1e-14);
    }
  const CorrBounds same = max_corr_bin_bin(0.3, 0.3);
  EXPECT_NEAR(same.hi, 1.0, 1e-15);
  const CorrBounds d = max_corr_bin_bin(0.0, 0.3);
  EXPECT_EQ(d.lo, 0.0);
  EXPECT_EQ(d.hi, 0.0);
}

TEST(Tetrachoric, SymmetricClosedForm) {
  for (int i = 1; i <= 9; ++i) {
    const double r = i / 10.0;
    EXPECT_NEAR(solve_tetrachoric(0.5, 0.5, r), std::sin(std::numbers::pi * r / 2), 1e-9);
    EXPECT_NEAR(solve_tetrachoric(0.5, 0.5, -r), -std::sin(std::numbers::pi * r / 2), 1e-9);
  }
}

TEST(Tetrachoric, ReproducesJointProbability) {
  for (double p1 : {0.05, 0.2, 0.69})
    for (double p2 : {0.1, 0.5, 0.8})
      for (double frac : {-0.8, -0.3, 0.2, 0.6, 0.95}) {
        const CorrBounds b = max_corr_bin_bin(p1, p2);
        const double r = frac > 0 ? frac * b.hi : -frac * b.lo;
        const double rho = solve_tetrachoric(p1, p2, r);
        const double joint = bvn_oracle(phi_inv(p1), phi_inv(p2), rho);
        EXPECT_NEAR(joint, r * std::sqrt(p1 * (1 - p1) * p2 * (1 - p2)) + p1 * p2, 1e-10)
            << p1 << " " << p2 << " " << r;
      }
}

TEST(Tetrachoric, ZeroAndBounds) {
  EXPECT_EQ(solve_tetrachoric(0.2, 0.7, 0.0), 0.0);
  const CorrBounds b = max_corr_bin_bin(0.2, 0.7);
  EXPECT_NEAR(solve_tetrachoric(0.2, 0.7, b.hi), 1.0, 1e-6);
  try {
    solve_tetrachoric(0.2, 0.7, b.hi + 0.05);
    FAIL() << "expected BoundViolation";
  } catch (const BoundViolation& e) {
    EXPECT_NEAR(e.admissible().hi, b.hi, 1e-15);
    EXPECT_NEAR(e.admissible().lo, b.lo, 1e-15);
  }
  EXPECT_THROW(solve_tetrachoric(0.0, 0.5, 0.1), std::domain_error);
}

TEST(Tetrachoric, MonotoneInTarget) {
  double prev = -2.0;
  const CorrBounds b = max_corr_bin_bin(0.15, 0.4);
  for (double r = b.lo + 0.01; r < b.hi; r += 0.02) {
    const double rho = solve_tetrachoric(0.15, 0.4, r);
    EXPECT_GT(rho, prev);
    prev = rho;
  }
}

TEST(NearestPd, LeavesPdUnchanged) {
  Eigen::MatrixXd m(3, 3);
  m << 1, 0.3, 0.1, 0.3, 1, 0.2, 0.1, 0.2, 1;
  EXPECT_EQ(nearest_pd(m), m);
}

TEST(NearestPd, RepairsIndefinite) {
  Eigen::MatrixXd m(3, 3);
  m << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  ASSERT_LT(min_eigenvalue(m), 0.0);
  const Eigen::MatrixXd r = nearest_pd(m);
  EXPECT_GE(min_eigenvalue(r), 1e-8 * 0.5);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r(i, i), 1.0, 1e-15);
  EXPECT_NEAR((r - r.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  EXPECT_EQ(llt.info(), Eigen::Success);
  // The sign pattern survives the repair.
  EXPECT_GT(r(0, 1), 0.0);
  EXPECT_LT(r(0, 2), 0.0);
}

TEST(NearestPd, RejectsAsymmetric) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0.5, 0.4, 1;
  EXPECT_THROW(nearest_pd(m), std::invalid_argument);
}

TEST(LatentCorr, ClampsAndLogs) {
  // 0.9 between binaries at 0.1 and 0.8 exceeds the Frechet upper bound.
  Eigen::MatrixXd target(3, 3);
  target << 1, 0.9, 0.5, 0.9, 1, 0.2, 0.5, 0.2, 1;
  const std::vector<LatentColumn> cols = {{true, 0.1}, {true, 0.8}, {false, 0}};
  Diagnostics d;
  const LatentCorrelation lc = build_latent_corr(target, cols, &d);
  ASSERT_FALSE(lc.repair_log.empty());
  EXPECT_EQ(lc.repair_log[0].row, 0u);
  EXPECT_EQ(lc.repair_log[0].col, 1u);
  EXPECT_NEAR(lc.repair_log[0].applied, max_corr_bin_bin(0.1, 0.8).hi, 1e-15);
  EXPECT_EQ(lc.repair_log[0].reason, "binary-binary bound");
  EXPECT_GE(d.count(), 1u);
  Eigen::LLT<Eigen::MatrixXd> llt(lc.latent);
  EXPECT_EQ(llt.info(), Eigen::Success);
}

TEST(LatentCorr, BinaryNormalScaledByBound) {
  Eigen::MatrixXd target(2, 2);
  target << 1, 0.5, 0.5, 1;
  const std::vector<LatentColumn> cols = {{true, 0.1}, {false, 0}};
  const LatentCorrelation lc = build_latent_corr(target, cols);
  EXPECT_TRUE(lc.repair_log.empty());
  EXPECT_NEAR(lc.latent(0, 1), 0.5 / max_corr_bin_norm(0.1), 1e-12);
}

TEST(LatentCorr, CsvLog) {
  const std::vector<RepairEntry> log = {{0, 1, 0.9, 0.5, "binary_binary_bound"}};
  EXPECT_EQ(repair_log_csv(log), "row,col,requested,applied,reason\n0,1,0.9,0.5,binary_binary_bound\n");
}

TEST(JointSampler, RoundTripCorrelations) {
  std::vector<VariableSpec> vars(4);
  vars[0].kind = VariableKind::binary_static;
  vars[0].prevalence = 0.3;
  vars[1].kind = VariableKind::binary_static;
  vars[1].prevalence = 0.6;
  vars[2].mu = 10;
  vars[2].sigma_across = 2;
  vars[3].mu = -1;
  vars[3].sigma_across = 0.5;
  Eigen::MatrixXd target(4, 4);
  target << 1, 0.25, 0.3, -0.2, 0.25, 1, 0.1, 0.35, 0.3, 0.1, 1, 0.4, -0.2, 0.35, 0.4, 1;
  const LatentCorrelation lc = build_latent_corr(target, vars);
  EXPECT_TRUE(lc.repair_log.empty());
  RandomStream rng(31, Purpose::generic);
  const Eigen::MatrixXd x = sample_joint(lc.latent, vars, 60000, rng);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mean;
  const Eigen::MatrixXd cov = c.transpose() * c / (x.rows() - 1.0);
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      EXPECT_NEAR(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), target(i, j), 0.025) << i << "," << j;
  EXPECT_NEAR(mean(0), 0.3, 0.01);
  EXPECT_NEAR(mean(1), 0.6, 0.01);
  EXPECT_NEAR(mean(2), 10.0, 0.05);
  EXPECT_NEAR(std::sqrt(cov(3, 3)), 0.5, 0.01);
}

TEST(JointSampler, RejectsIndefinite) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 1.2, 1.2, 1;
  const std::vector<JointSampler::Column> cols(2);
  EXPECT_THROW(JointSampler(m, cols), std::logic_error);
}
