#include <gtest/gtest.h>

#include <cmath>

#include "eabm/moments.hpp"
#include "eabm/rng.hpp"

namespace {

using namespace eabm;
using namespace eabm::moments;

std::vector<double> iid_normal(size_t n, uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal(0.0, sd);
  return x;
}

// Pareto with survival exponent a: P(X > x) = x^-a for x >= 1.
std::vector<double> pareto_survival(size_t n, double a, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = std::pow(rng.uniform01(), -1.0 / a);
  return x;
}

TEST(MicroLogReturns, BasicsAndErrors) {
  std::vector<double> constant(10, 10000.0);
  auto r = micro_log_returns(constant);
  ASSERT_EQ(r.size(), 9u);
  for (double v : r) EXPECT_DOUBLE_EQ(v, 0.0);

  auto r2 = micro_log_returns({10000.0, 10100.0});
  ASSERT_EQ(r2.size(), 1u);
  EXPECT_NEAR(r2[0], std::log(1.01), 1e-15);

  EXPECT_THROW(micro_log_returns({10000.0}), std::invalid_argument);
  EXPECT_THROW(micro_log_returns({10000.0, -1.0}), std::invalid_argument);
}

TEST(Ks, IdenticalSeriesIsExactlyZero) {
  auto x = iid_normal(5000, 1);
  EXPECT_DOUBLE_EQ(two_sample_ks(x, x), 0.0);
}

TEST(Ks, DisjointSupportsAreExactlyOne) {
  std::vector<double> a(100), b(100);
  for (size_t i = 0; i < 100; ++i) {
    a[i] = static_cast<double>(i);
    b[i] = 1000.0 + static_cast<double>(i);
  }
  EXPECT_DOUBLE_EQ(two_sample_ks(a, b), 1.0);
}

TEST(Ks, DetectsShift) {
  auto a = iid_normal(20000, 2);
  auto b = iid_normal(20000, 3);
  for (auto& v : b) v += 0.5;
  double d = two_sample_ks(a, b);
  EXPECT_GT(d, 0.15);
  EXPECT_LT(d, 0.25);  // Phi(0.25)-Phi(-0.25) ~ 0.197
}

TEST(Hurst, WhiteNoiseIsHalf) {
  auto x = iid_normal(100000, 7);
  EXPECT_NEAR(hurst_rs(x), 0.5, 0.03);
}

TEST(Hurst, DetectsMeanReversionDirection) {
  // AR(1) with negative coefficient mean-reverts: H < 0.5
  Rng rng(8);
  std::vector<double> x(100000);
  double prev = 0.0;
  for (auto& v : x) {
    v = -0.5 * prev + rng.normal();
    prev = v;
  }
  EXPECT_LT(hurst_rs(x), 0.45);
}

TEST(Gph, WhiteNoiseIsZero) {
  auto x = iid_normal(100000, 9);
  for (auto& v : x) v = std::fabs(v);
  EXPECT_NEAR(gph_estimate(x), 0.0, 0.05);
}

TEST(Adf, StationarySeriesIsVeryNegative) {
  auto x = iid_normal(20000, 10);
  EXPECT_LT(adf_tstat(x), -20.0);
}

TEST(Adf, RandomWalkIsNotRejected) {
  Rng rng(11);
  std::vector<double> x(20000);
  double acc = 0.0;
  for (auto& v : x) {
    acc += rng.normal();
    v = acc;
  }
  EXPECT_GT(adf_tstat(x), -3.5);
}

TEST(Garch, RecoversParameterSum) {
  // alpha + beta = 0.95, omega scaled for unit unconditional variance
  Rng rng(12);
  const double omega = 0.05, alpha = 0.10, beta = 0.85;
  size_t n = 100000;
  std::vector<double> r(n);
  double sigma2 = 1.0;
  double prev = 0.0;
  for (size_t t = 0; t < n; ++t) {
    sigma2 = omega + alpha * prev * prev + beta * sigma2;
    prev = std::sqrt(sigma2) * rng.normal();
    r[t] = prev;
  }
  auto fit = garch11_fit(r);
  ASSERT_TRUE(fit.converged);
  EXPECT_NEAR(fit.sum(), 0.95, 0.05);
}

TEST(Hill, ParetoTailRecovery) {
  auto x = pareto_survival(100000, 3.0, 13);
  EXPECT_NEAR(hill_tail_index(x, 0.05, true), 3.0, 0.2);
  EXPECT_NEAR(hill_tail_index(x, 0.05, false), 3.0, 0.2);  // plain-Hill fallback
}

TEST(EstimateMoments, PermutationSensitivityPattern) {
  auto cfg_series = [&](uint64_t seed) {
    // mildly autocorrelated series so order matters for the memory estimators
    Rng rng(seed);
    std::vector<double> x(20000);
    double prev = 0.0;
    for (auto& v : x) {
      v = 0.4 * prev + rng.normal();
      prev = v;
    }
    return x;
  };
  auto x = cfg_series(20);
  auto shuffled = x;
  Rng rng(21);
  rng.shuffle(shuffled);
  auto a = estimate_moments(x, x);
  auto b = estimate_moments(shuffled, x);
  EXPECT_DOUBLE_EQ(a.mean, b.mean);
  EXPECT_NEAR(a.std, b.std, 1e-12);
  EXPECT_DOUBLE_EQ(a.hill, b.hill);  // order-free estimators unchanged
  EXPECT_GT(std::fabs(a.hurst - b.hurst), 0.02);
  EXPECT_GT(std::fabs(a.adf - b.adf), 1.0);
}

TEST(EstimateMoments, ShortSeriesRejected) {
  std::vector<double> x(50, 0.1);
  EXPECT_THROW(estimate_moments(x, x), std::invalid_argument);
}

TEST(Bootstrap, ConstantSeriesGivesZeroCovariance) {
  std::vector<double> x(4000, 0.5);
  auto wm = moving_block_bootstrap_cov(x, 2000, 16, 1);
  EXPECT_NEAR(wm.cov.norm(), 0.0, 1e-18);
}

TEST(Bootstrap, ReplicatesAreContiguousWindowConcatenations) {
  // ramp series: within any copied window consecutive differences equal one
  size_t n = 10000, window = 2000;
  std::vector<double> ramp(n);
  for (size_t i = 0; i < n; ++i) ramp[i] = static_cast<double>(i);
  Rng rng(33);
  for (int rep = 0; rep < 10; ++rep) {
    auto r = make_block_replicate(ramp, window, rng);
    ASSERT_EQ(r.size(), n);
    for (size_t pos = 0; pos < n; ++pos) {
      size_t off = pos % window;
      if (off == 0) {
        EXPECT_GE(r[pos], 0.0);
        EXPECT_LE(r[pos], static_cast<double>(n - window));
      } else {
        EXPECT_DOUBLE_EQ(r[pos], r[pos - 1] + 1.0);  // contiguity inside the block
      }
    }
  }
}

TEST(Bootstrap, CovarianceSymmetricPsd) {
  Rng rng(41);
  std::vector<double> x(6000);
  for (auto& v : x) v = 1e-4 * rng.normal();
  auto wm = moving_block_bootstrap_cov(x, 2000, 64, 5);
  EXPECT_NEAR((wm.cov - wm.cov.transpose()).norm(), 0.0, 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(wm.cov);
  for (int i = 0; i < 8; ++i) EXPECT_GE(es.eigenvalues()(i), -1e-10);
  EXPECT_GT(wm.condition_number, 1.0);
}

TEST(Bootstrap, CovarianceConvergesInReplicates) {
  Rng rng(42);
  std::vector<double> x(4000);
  double prev = 0.0;
  for (auto& v : x) {
    v = 0.2 * prev + 1e-4 * rng.normal();
    prev = v;
  }
  auto a = moving_block_bootstrap_cov(x, 2000, 500, 9);
  auto b = moving_block_bootstrap_cov(x, 2000, 1000, 9);
  // normalise scale per moment so the Frobenius comparison is meaningful
  Eigen::VectorXd scale = b.cov.diagonal().cwiseSqrt().cwiseMax(1e-300);
  Eigen::MatrixXd da = a.cov.array() / (scale * scale.transpose()).array();
  Eigen::MatrixXd db = b.cov.array() / (scale * scale.transpose()).array();
  EXPECT_LT((da - db).norm() / db.norm(), 0.10);
}

TEST(Smd, ZeroAtTruthAndQuadraticScaling) {
  std::array<double, 8> me{0.0, 1.0, 0.1, 0.4, 0.5, -100.0, 0.9, 2.0};
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(8, 8);
  auto at_truth = [&](const std::array<double, 6>&, uint64_t) {
    MomentVector mv;
    mv.mean = me[0];
    mv.std = me[1];
    mv.ks = me[2];
    mv.hurst = me[3];
    mv.gph = me[4];
    mv.adf = me[5];
    mv.garch_sum = me[6];
    mv.hill = me[7];
    return std::optional<MomentVector>(mv);
  };
  std::array<double, 6> theta{8, 6, 0.125, 3.289, 7.221, 0.041};
  EXPECT_DOUBLE_EQ(smd_objective(theta, me, W, 5, at_truth), 0.0);

  auto offset_by = [&](double d) {
    return [me, d](const std::array<double, 6>&, uint64_t) {
      MomentVector mv;
      mv.mean = me[0] + d;
      mv.std = me[1];
      mv.ks = me[2];
      mv.hurst = me[3];
      mv.gph = me[4];
      mv.adf = me[5];
      mv.garch_sum = me[6];
      mv.hill = me[7];
      return std::optional<MomentVector>(mv);
    };
  };
  double f1 = smd_objective(theta, me, W, 5, offset_by(1.0));
  double f2 = smd_objective(theta, me, W, 5, offset_by(2.0));
  EXPECT_DOUBLE_EQ(f1, 1.0);  // identity W, unit error in one moment
  EXPECT_DOUBLE_EQ(f2, 4.0);  // doubling the error quadruples the objective
}

TEST(Smd, ReplicatesRunAtSeedsOneThroughI) {
  std::array<double, 8> me{};
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(8, 8);
  std::vector<uint64_t> seen;
  auto recorder = [&](const std::array<double, 6>&, uint64_t seed) {
    seen.push_back(seed);
    return std::optional<MomentVector>(MomentVector{});
  };
  smd_objective({}, me, W, 5, recorder);
  EXPECT_EQ(seen, (std::vector<uint64_t>{1, 2, 3, 4, 5}));
}

TEST(Smd, ReplicateFailurePoisonsObjective) {
  std::array<double, 8> me{};
  Eigen::MatrixXd W = Eigen::MatrixXd::Identity(8, 8);
  auto failing = [&](const std::array<double, 6>&, uint64_t seed) -> std::optional<MomentVector> {
    if (seed == 3) return std::nullopt;
    return MomentVector{};
  };
  EXPECT_TRUE(std::isinf(smd_objective({}, me, W, 5, failing)));
}

TEST(ConfidenceIntervals, ExposureShapeAndCollapse) {
  // theta_i = c_i * z, m_j = z: B_ij = c_i exactly
  Rng rng(77);
  std::vector<std::pair<std::array<double, 6>, std::array<double, 8>>> rows;
  std::array<double, 6> c{1.0, -2.0, 0.5, 3.0, 0.0, 1.5};
  for (int r = 0; r < 200; ++r) {
    double z = rng.normal();
    std::array<double, 6> t;
    std::array<double, 8> m;
    for (int i = 0; i < 6; ++i) t[static_cast<size_t>(i)] = c[static_cast<size_t>(i)] * z;
    for (int j = 0; j < 8; ++j) m[static_cast<size_t>(j)] = z;
    rows.emplace_back(t, m);
  }
  std::array<double, 6> theta_hat{8, 6, 0.125, 3.289, 7.221, 0.041};

  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(8, 8);
  auto collapsed = confidence_intervals(rows, zero, theta_hat);
  EXPECT_EQ(collapsed.exposure.rows(), 6);
  EXPECT_EQ(collapsed.exposure.cols(), 8);
  for (int i = 0; i < 6; ++i) {
    EXPECT_DOUBLE_EQ(collapsed.interval[static_cast<size_t>(i)][0], theta_hat[static_cast<size_t>(i)]);
    EXPECT_DOUBLE_EQ(collapsed.interval[static_cast<size_t>(i)][2], theta_hat[static_cast<size_t>(i)]);
    for (int j = 0; j < 8; ++j)
      EXPECT_NEAR(collapsed.exposure(i, j), c[static_cast<size_t>(i)], 1e-9);
  }
}

// Reproduces the published kappa interval's half-width structure: a symmetric
// interval of half-width 0.135 about 3.289 (the printed bounds 3.254/3.524
// span 0.27).
TEST(ConfidenceIntervals, KappaHalfWidthStructure) {
  std::vector<std::pair<std::array<double, 6>, std::array<double, 8>>> rows;
  Rng rng(78);
  // engineer B for kappa: theta_kappa = c * z with all moments equal to z
  const double half_width = (3.524 - 3.254) / 2.0;  // 0.135
  const double target_sd = half_width / 1.96;
  const double c = target_sd / 8.0;  // Sigma_theta = c^2 * sum(Sigma_me) = c^2 * 64 with unit entries
  for (int r = 0; r < 500; ++r) {
    double z = rng.normal();
    std::array<double, 6> t{};
    std::array<double, 8> m;
    t[3] = c * z;
    for (int j = 0; j < 8; ++j) m[static_cast<size_t>(j)] = z;
    rows.emplace_back(t, m);
  }
  Eigen::MatrixXd sigma_me = Eigen::MatrixXd::Ones(8, 8);
  std::array<double, 6> theta_hat{8, 6, 0.125, 3.289, 7.221, 0.041};
  auto ci = confidence_intervals(rows, sigma_me, theta_hat);
  double lo = ci.interval[3][0], hat = ci.interval[3][1], hi = ci.interval[3][2];
  EXPECT_DOUBLE_EQ(hat, 3.289);
  EXPECT_NEAR(hi - lo, 2.0 * half_width, 1e-9);
  EXPECT_NEAR(hat - lo, hi - hat, 1e-12);  // symmetric about the estimate
  EXPECT_NEAR(lo, 3.289 - 0.135, 1e-9);
  EXPECT_NEAR(hi, 3.289 + 0.135, 1e-9);
}

}  // namespace
