#include <gtest/gtest.h>

#include <cmath>

#include "hetfx/error.hpp"
#include "hetfx/estimators.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/stats.hpp"
#include "hetfx/wls.hpp"

using namespace hetfx;

namespace {

// Main sample from Y = Z + D (0.5 + Z) + eps with S = Z, B = Z.
MainSample linear_sample(Eigen::Index n, std::uint64_t seed, double p = 0.5, bool p_varies = false) {
  Rng rng(seed);
  MainSample m;
  m.y.resize(n);
  m.d.resize(n);
  m.p.resize(n);
  m.b.resize(n);
  m.s.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = 2.0 * rng.uniform() - 1.0;
    const double pi = p_varies ? (z > 0 ? 0.3 : 0.5) : p;
    m.p[i] = pi;
    m.d[i] = rng.bernoulli(pi) ? 1.0 : 0.0;
    m.y[i] = z + m.d[i] * (0.5 + z) + rng.normal();
    m.b[i] = z;
    m.s[i] = z;
  }
  m.w = (m.p.array() * (1.0 - m.p.array())).inverse();
  m.h = (m.d - m.p).cwiseProduct(m.w);
  m.sweight = Eigen::VectorXd::Ones(n);
  m.controls.resize(n, 0);
  return m;
}

}  // namespace

TEST(Blp, WeightedMatchesDirectRegression) {
  const MainSample m = linear_sample(400, 1, 0.5, true);
  const BlpFit fit = estimate_blp(m, Strategy::weighted);
  const Eigen::Index n = m.size();
  Eigen::MatrixXd X(n, 5);
  const double sbar = m.s.mean();
  for (Eigen::Index i = 0; i < n; ++i)
    X.row(i) << 1.0, m.b[i], m.s[i], m.d[i] - m.p[i], (m.d[i] - m.p[i]) * (m.s[i] - sbar);
  const WlsFit direct = fit_weighted_ols(X, m.y, m.w);
  EXPECT_NEAR(fit.beta1, direct.coef[3], 1e-12);
  EXPECT_NEAR(fit.beta2, direct.coef[4], 1e-12);
  EXPECT_NEAR(fit.cov(0, 1), direct.cov(3, 4), 1e-12);
  EXPECT_NEAR(fit.lambda, fit.beta2 * fit.beta2 * variance(as_span(m.s)), 1e-14);
  // S and B are the same column here, so one of them is dropped.
  EXPECT_EQ(fit.dropped.size(), 1u);
}

TEST(Blp, HtMatchesDirectRegression) {
  const MainSample m = linear_sample(400, 2, 0.5, true);
  const BlpFit fit = estimate_blp(m, Strategy::ht);
  const Eigen::Index n = m.size();
  Eigen::MatrixXd X(n, 4);
  const double sbar = m.s.mean();
  for (Eigen::Index i = 0; i < n; ++i) X.row(i) << m.h[i], m.h[i] * m.b[i], 1.0, m.s[i] - sbar;
  const WlsFit direct = fit_weighted_ols(X, m.y.cwiseProduct(m.h), Eigen::VectorXd::Ones(n));
  EXPECT_NEAR(fit.beta1, direct.coef[2], 1e-10);
  EXPECT_NEAR(fit.beta2, direct.coef[3], 1e-10);
  EXPECT_NEAR(fit.se2(), direct.se(3), 1e-10);
}

TEST(Blp, StrategiesCoincideWithConstantPropensityHalf) {
  MainSample m = linear_sample(300, 3);
  Rng rng(8);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.b[i] = rng.normal();
  const BlpFit a = estimate_blp(m, Strategy::weighted), b = estimate_blp(m, Strategy::ht);
  EXPECT_NEAR(a.beta2, b.beta2, 1e-10);
  EXPECT_NEAR(a.beta1, b.beta1, 1e-10);
}

TEST(Blp, RecoversLinearCateAtScale) {
  const MainSample m = linear_sample(40000, 4);
  for (Strategy st : {Strategy::weighted, Strategy::ht}) {
    const BlpFit fit = estimate_blp(m, st);
    EXPECT_NEAR(fit.beta1, 0.5, 4 * fit.se1());
    EXPECT_NEAR(fit.beta2, 1.0, 4 * fit.se2());
  }
}

TEST(Blp, ClusteredCovarianceAndControls) {
  MainSample m = linear_sample(300, 5);
  m.controls = Eigen::MatrixXd::Random(300, 2);
  m.control_names = {"c1", "c2"};
  for (Eigen::Index i = 0; i < 300; ++i) m.cluster.push_back(i / 3);
  const BlpFit fit = estimate_blp(m, Strategy::weighted);
  EXPECT_EQ(fit.nuisance.size(), 5);
  EXPECT_GT(fit.se1(), 0.0);
}

TEST(Blp, ConstantProxyIsAnError) {
  MainSample m = linear_sample(100, 6);
  m.s.setConstant(0.3);
  EXPECT_THROW(estimate_blp(m, Strategy::weighted), EstimationError);
}

TEST(Groups, SizesAndCuts) {
  Eigen::VectorXd s(10);
  s << 9, 8, 7, 6, 5, 4, 3, 2, 1, 0;
  const GroupScheme g = make_groups(s, 5);
  EXPECT_EQ(g.sizes, (std::vector<std::size_t>{2, 2, 2, 2, 2}));
  EXPECT_EQ(g.membership[9], 0);
  EXPECT_EQ(g.membership[0], 4);
  EXPECT_EQ(g.cuts[1], 2.0);
  EXPECT_TRUE(std::isinf(g.cuts[0]) && g.cuts[0] < 0);
  Eigen::VectorXd s13 = Eigen::VectorXd::LinSpaced(13, 0, 12);
  const GroupScheme g13 = make_groups(s13, 4);
  for (std::size_t k : g13.sizes) EXPECT_TRUE(k == 3 || k == 4);
}

TEST(Groups, TiesShareAGroup) {
  Eigen::VectorXd s(8);
  s << 0, 1, 1, 1, 2, 3, 4, 5;
  const GroupScheme g = make_groups(s, 4);
  EXPECT_EQ(g.membership, (std::vector<int>{0, 1, 1, 1, 2, 2, 3, 3}));
}

TEST(Groups, MassPointErrorNamesTheCut) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(20);
  s[19] = 1.0;
  try {
    make_groups(s, 5);
    FAIL();
  } catch (const EstimationError& e) {
    EXPECT_NE(std::string(e.what()).find("cut"), std::string::npos);
  }
  EXPECT_THROW(make_groups(s, 1), ConfigError);
  EXPECT_NO_THROW(make_groups(s, 1, true));
}

TEST(Gates, SingleGroupEqualsAteRegression) {
  const MainSample m = linear_sample(500, 7);
  GatesOptions opt;
  opt.allow_single_group = true;
  const GatesFit g = estimate_gates(m, 1, Strategy::weighted, opt);
  Eigen::MatrixXd X(m.size(), 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) X.row(i) << 1.0, m.b[i], m.s[i], m.d[i] - m.p[i];
  const WlsFit direct = fit_weighted_ols(X, m.y, m.w);
  EXPECT_NEAR(g.gamma[0], direct.coef[3], 1e-8);
  const BlpFit blp = estimate_blp(m, Strategy::weighted);
  EXPECT_NEAR(g.gamma[0], blp.beta1, 0.2 * blp.se1());
}

TEST(Gates, SortedEffectsAndOracleShape) {
  const MainSample m = linear_sample(50000, 8);
  for (Strategy st : {Strategy::weighted, Strategy::ht}) {
    const GatesFit g = estimate_gates(m, 5, st);
    // E[0.5 + Z | quintile] for Z ~ U(-1,1)
    const double truth[5] = {-0.3, 0.1, 0.5, 0.9, 1.3};
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(g.gamma[k], truth[k], 4 * g.se()[k]);
    EXPECT_NEAR(g.lambda_bar, g.gamma.squaredNorm() / 5, 1e-14);
    EXPECT_LT(g.homogeneity_p, 1e-10);
  }
}

TEST(Gates, HomogeneityStatisticMatchesHandComputation) {
  const MainSample m = linear_sample(600, 9);
  const GatesFit g = estimate_gates(m, 3, Strategy::weighted);
  Eigen::MatrixXd R(2, 3);
  R << 1, -1, 0, 0, 1, -1;
  const Eigen::VectorXd r = R * g.gamma;
  const double stat = r.dot((R * g.cov * R.transpose()).inverse() * r);
  EXPECT_NEAR(g.homogeneity_stat, stat, 1e-9 * std::max(1.0, stat));
  EXPECT_NEAR(g.homogeneity_p, std::exp(-stat / 2), 1e-9);
}

TEST(Band, CriticalValues) {
  Rng rng(1);
  // One group: the two-sided normal quantile.
  const double c1 = max_t_critical_value(Eigen::MatrixXd::Constant(1, 1, 4.0), 0.05, rng, 200000);
  EXPECT_NEAR(c1, 1.959964, 0.02);
  // Independent groups: Sidak quantile.
  const double c5 = max_t_critical_value(Eigen::MatrixXd::Identity(5, 5), 0.05, rng, 200000);
  EXPECT_NEAR(c5, normal_quantile(1.0 - (1.0 - std::pow(0.95, 0.2)) / 2.0), 0.02);
  // Perfectly correlated groups collapse to one.
  bool repaired = true;
  const double cc = max_t_critical_value(Eigen::MatrixXd::Ones(4, 4), 0.05, rng, 200000, &repaired);
  EXPECT_NEAR(cc, 1.959964, 0.02);
  EXPECT_FALSE(repaired);
}

TEST(Band, RepairsIndefiniteCovariance) {
  Eigen::Matrix3d v;
  v << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  Rng rng(2);
  bool repaired = false;
  const double c = max_t_critical_value(v, 0.05, rng, 20000, &repaired);
  EXPECT_TRUE(repaired);
  EXPECT_TRUE(std::isfinite(c));
  EXPECT_THROW(max_t_critical_value(Eigen::MatrixXd::Zero(2, 2), 0.05, rng, 10), EstimationError);
}

TEST(Band, JointCoverageBeatsPointwise) {
  Eigen::VectorXd gamma(3);
  gamma << 0, 1, 2;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3) * 0.25;
  Rng rng(3);
  const Band b = joint_band(gamma, cov, 0.05, rng);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(b.hi[k] - gamma[k], b.critical_value * 0.5, 1e-14);
    EXPECT_GT(b.critical_value, 1.96);
  }
}

TEST(Rearrangement, SortsPointsAndEnvelopes) {
  Eigen::VectorXd v(4);
  v << 3, 1, 2, 0;
  EXPECT_EQ(rearrange_monotone(v), Eigen::Vector4d(0, 1, 2, 3));
  Band b;
  b.lo = Eigen::Vector3d(1, 0, 2);
  b.hi = Eigen::Vector3d(4, 5, 3);
  const Band r = rearrange_monotone(b);
  EXPECT_EQ(r.lo, Eigen::Vector3d(0, 1, 2));
  EXPECT_EQ(r.hi, Eigen::Vector3d(3, 4, 5));
  for (int k = 0; k < 3; ++k) EXPECT_LE(r.lo[k], r.hi[k]);
  // Already monotone input is unchanged.
  EXPECT_EQ(rearrange_monotone(Eigen::Vector3d(1, 2, 3)), Eigen::Vector3d(1, 2, 3));
}

TEST(Clan, MeansAndWelchStandardErrors) {
  MainSample m;
  const int n = 4;
  m.sweight = Eigen::VectorXd::Ones(n);
  m.y = m.d = m.p = m.w = m.h = Eigen::VectorXd::Zero(n);
  GroupScheme g;
  g.K = 2;
  g.membership = {0, 0, 1, 1};
  Eigen::MatrixXd x(n, 1);
  x << 1, 3, 2, 6;
  const ClanFit c = estimate_clan(m, g, x, {"x"}, 0.05);
  ASSERT_EQ(c.variables.size(), 1u);
  const ClanVariable& v = c.variables[0];
  EXPECT_DOUBLE_EQ(v.delta1, 2.0);
  EXPECT_DOUBLE_EQ(v.deltaK, 4.0);
  EXPECT_DOUBLE_EQ(v.diff, 2.0);
  // sample variances 2 and 8 over groups of 2
  EXPECT_NEAR(v.se1, 1.0, 1e-12);
  EXPECT_NEAR(v.seK, 2.0, 1e-12);
  EXPECT_NEAR(v.se_diff, std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(v.ci_hi - v.diff, 1.959963984540054 * std::sqrt(5.0), 1e-9);
}

TEST(Clan, WeightsAndSingletonClustersMatchUnclustered) {
  MainSample m = linear_sample(200, 10);
  Rng rng(4);
  for (Eigen::Index i = 0; i < 200; ++i) m.sweight[i] = 0.5 + rng.uniform();
  const GroupScheme g = make_groups(m.s, 4);
  Eigen::MatrixXd x(200, 2);
  x.col(0) = m.s;
  x.col(1) = m.y;
  const ClanFit a = estimate_clan(m, g, x, {"s", "y"}, 0.1);
  for (Eigen::Index i = 0; i < 200; ++i) m.cluster.push_back(i);
  const ClanFit b = estimate_clan(m, g, x, {"s", "y"}, 0.1);
  for (int j = 0; j < 2; ++j) {
    EXPECT_NEAR(a.variables[j].se_diff, b.variables[j].se_diff, 1e-12);
    EXPECT_NEAR(a.variables[j].delta1, b.variables[j].delta1, 1e-15);
  }
  // Weighted mean by hand for the low group.
  double sw = 0, swx = 0;
  for (Eigen::Index i = 0; i < 200; ++i)
    if (g.membership[static_cast<std::size_t>(i)] == 0) {
      sw += m.sweight[i];
      swx += m.sweight[i] * x(i, 0);
    }
  EXPECT_NEAR(a.variables[0].delta1, swx / sw, 1e-12);
  EXPECT_GT(a.variables[0].diff, 1.0);
}
