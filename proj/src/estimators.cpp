#include "hetfx/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/stats.hpp"
#include "hetfx/wls.hpp"

namespace hetfx {

std::string to_string(Strategy s) { return s == Strategy::weighted ? "weighted" : "ht"; }

MainSample make_main_sample(const Dataset& ds, std::span<const std::size_t> rows,
                            const ProxyValues& proxies) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (proxies.b.size() != n || proxies.s.size() != n)
    throw EstimationError("proxy values do not match main-sample size");
  MainSample m;
  m.y.resize(n);
  m.d.resize(n);
  m.p.resize(n);
  m.w.resize(n);
  m.h.resize(n);
  m.sweight.resize(n);
  m.controls.resize(n, ds.controls().cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
    m.y[k] = ds.y()[i];
    m.d[k] = ds.d()[i];
    m.p[k] = ds.p()[i];
    m.w[k] = ds.w()[i];
    m.h[k] = ds.h()[i];
    m.sweight[k] = ds.sweight()[i];
    m.controls.row(k) = ds.controls().row(i);
  }
  m.control_names = ds.control_names();
  if (ds.cluster())
    for (std::size_t r : rows) m.cluster.push_back((*ds.cluster())[r]);
  m.b = proxies.b;
  m.s = proxies.s;
  return m;
}

namespace {

// X1 = [1, B, S, controls] and its column names.
Eigen::MatrixXd base_controls(const MainSample& m, std::vector<std::string>& names) {
  const Eigen::Index n = m.size(), c = m.controls.cols();
  Eigen::MatrixXd X1(n, 3 + c);
  X1.col(0).setOnes();
  X1.col(1) = m.b;
  X1.col(2) = m.s;
  if (c > 0) X1.rightCols(c) = m.controls;
  names = {"const", "B", "S"};
  names.insert(names.end(), m.control_names.begin(), m.control_names.end());
  return X1;
}

std::vector<std::string> dropped_names(const WlsFit& fit, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (std::size_t j : fit.dropped_cols) out.push_back(j < names.size() ? names[j] : std::to_string(j));
  return out;
}

void check_sample(const MainSample& m) {
  if (m.size() == 0) throw EstimationError("main sample is empty");
  if ((m.s.array() - m.s.mean()).square().sum() <= 0.0)
    throw EstimationError("S has zero variance on the main sample");
}

}  // namespace

BlpFit estimate_blp(const MainSample& m, Strategy strategy) {
  check_sample(m);
  const Eigen::Index n = m.size();
  std::vector<std::string> names;
  const Eigen::MatrixXd X1 = base_controls(m, names);
  const Eigen::Index k1 = X1.cols();
  const Eigen::VectorXd s_c = m.s.array() - m.s.mean();

  Eigen::MatrixXd X(n, k1 + 2);
  Eigen::VectorXd y, w;
  if (strategy == Strategy::weighted) {
    const Eigen::VectorXd dp = m.d - m.p;
    X.leftCols(k1) = X1;
    X.col(k1) = dp;
    X.col(k1 + 1) = dp.cwiseProduct(s_c);
    y = m.y;
    w = m.w.cwiseProduct(m.sweight);
    names.push_back("D-p");
    names.push_back("(D-p)(S-Sbar)");
  } else {
    X.leftCols(k1) = m.h.asDiagonal() * X1;
    X.col(k1).setOnes();
    X.col(k1 + 1) = s_c;
    y = m.y.cwiseProduct(m.h);
    w = m.sweight;
    for (auto& nm : names) nm = "H*" + nm;
    names.push_back("1");
    names.push_back("S-Sbar");
  }
  const WlsFit fit = fit_weighted_ols(X, y, w, m.cluster);
  if (fit.dropped(static_cast<std::size_t>(k1)) || fit.dropped(static_cast<std::size_t>(k1 + 1)))
    throw EstimationError("BLP: treatment regressors are collinear with the controls");

  BlpFit out;
  out.strategy = strategy;
  out.beta1 = fit.coef[k1];
  out.beta2 = fit.coef[k1 + 1];
  out.nuisance = fit.coef.head(k1);
  out.cov = fit.cov.block(k1, k1, 2, 2);
  out.lambda = out.beta2 * out.beta2 * variance(as_span(m.s));
  out.dropped = dropped_names(fit, names);
  out.condition = fit.condition;
  return out;
}

GroupScheme make_groups(const Eigen::VectorXd& s, int K, bool allow_single_group) {
  if (K < 1 || (K < 2 && !allow_single_group)) throw ConfigError("GATES needs K >= 2 groups");
  const auto n = static_cast<std::size_t>(s.size());
  if (n < static_cast<std::size_t>(K)) throw EstimationError("fewer main-sample rows than groups");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s[static_cast<Eigen::Index>(a)] < s[static_cast<Eigen::Index>(b)];
  });
  GroupScheme g;
  g.K = K;
  g.membership.assign(n, 0);
  g.sizes.assign(static_cast<std::size_t>(K), 0);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    const double v = s[static_cast<Eigen::Index>(order[start])];
    while (end < n && s[static_cast<Eigen::Index>(order[end])] == v) ++end;
    const double avg_rank = 0.5 * static_cast<double>(start + end - 1);
    const int k = std::min(K - 1, static_cast<int>(std::floor((avg_rank + 0.5) * K / static_cast<double>(n))));
    for (std::size_t q = start; q < end; ++q) g.membership[order[q]] = k;
    g.sizes[static_cast<std::size_t>(k)] += end - start;
    start = end;
  }
  g.cuts.assign(static_cast<std::size_t>(K + 1), 0.0);
  g.cuts.front() = -std::numeric_limits<double>::infinity();
  g.cuts.back() = std::numeric_limits<double>::infinity();
  std::vector<double> group_min(static_cast<std::size_t>(K), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    auto& mn = group_min[static_cast<std::size_t>(g.membership[i])];
    mn = std::min(mn, s[static_cast<Eigen::Index>(i)]);
  }
  for (int k = 0; k < K; ++k) {
    if (g.sizes[static_cast<std::size_t>(k)] == 0)
      throw EstimationError("GATES group " + std::to_string(k + 1) +
                            " is empty: a mass point of S spans quantile cut " + std::to_string(k) +
                            "/" + std::to_string(K) + "; merge groups or jitter the proxy");
    if (k > 0) g.cuts[static_cast<std::size_t>(k)] = group_min[static_cast<std::size_t>(k)];
  }
  return g;
}

GatesFit estimate_gates(const MainSample& m, const GroupScheme& groups, Strategy strategy) {
  check_sample(m);
  const Eigen::Index n = m.size();
  if (static_cast<Eigen::Index>(groups.membership.size()) != n)
    throw EstimationError("group scheme does not match main sample");
  const int K = groups.K;
  std::vector<std::string> names;
  const Eigen::MatrixXd X1 = base_controls(m, names);
  const Eigen::Index k1 = X1.cols();

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) G(i, groups.membership[static_cast<std::size_t>(i)]) = 1.0;

  Eigen::MatrixXd X(n, k1 + K);
  Eigen::VectorXd y, w;
  if (strategy == Strategy::weighted) {
    X.leftCols(k1) = X1;
    X.rightCols(K) = (m.d - m.p).asDiagonal() * G;
    y = m.y;
    w = m.w.cwiseProduct(m.sweight);
  } else {
    X.leftCols(k1) = m.h.asDiagonal() * X1;
    X.rightCols(K) = G;
    y = m.y.cwiseProduct(m.h);
    w = m.sweight;
    for (auto& nm : names) nm = "H*" + nm;
  }
  for (int k = 0; k < K; ++k) names.push_back("G" + std::to_string(k + 1));

  const WlsFit fit = fit_weighted_ols(X, y, w, m.cluster);
  for (int k = 0; k < K; ++k)
    if (fit.dropped(static_cast<std::size_t>(k1 + k)))
      throw EstimationError("GATES: group regressor " + std::to_string(k + 1) + " is collinear");

  GatesFit out;
  out.strategy = strategy;
  out.groups = groups;
  out.gamma = fit.coef.tail(K);
  out.cov = fit.cov.bottomRightCorner(K, K);
  out.lambda_bar = out.gamma.squaredNorm() / K;
  out.dropped = dropped_names(fit, names);
  if (K >= 2) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(K - 1, K);
    for (int k = 0; k + 1 < K; ++k) {
      R(k, k) = 1.0;
      R(k, k + 1) = -1.0;
    }
    const Eigen::VectorXd r = R * out.gamma;
    const Eigen::MatrixXd V = R * out.cov * R.transpose();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(V);
    if (cod.rank() > 0) {
      out.homogeneity_stat = r.dot(cod.solve(r));
      out.homogeneity_p = chi_squared_sf(out.homogeneity_stat, static_cast<double>(cod.rank()));
    }
  }
  return out;
}

GatesFit estimate_gates(const MainSample& m, int K, Strategy strategy, const GatesOptions& options) {
  return estimate_gates(m, make_groups(m.s, K, options.allow_single_group), strategy);
}

double max_t_critical_value(const Eigen::MatrixXd& cov, double alpha, Rng& rng, int draws, bool* repaired) {
  const Eigen::Index K = cov.rows();
  if (K == 0 || cov.cols() != K) throw EstimationError("band: covariance must be square and nonempty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("band: alpha must lie in (0,1)");
  if (draws < 1) throw ConfigError("band: draws must be positive");
  Eigen::VectorXd sd = cov.diagonal();
  if ((sd.array() <= 0.0).any()) throw EstimationError("band: a GATES standard error is zero");
  sd = sd.cwiseSqrt();
  Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal();
  corr = 0.5 * (corr + corr.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  Eigen::VectorXd ev = eig.eigenvalues();
  const bool clipped = ev.minCoeff() < -1e-10 * std::max(1.0, ev.maxCoeff());
  if (repaired) *repaired = clipped;
  ev = ev.cwiseMax(0.0);
  const Eigen::MatrixXd L = eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();

  std::vector<double> maxima(static_cast<std::size_t>(draws));
  Eigen::VectorXd e(K);
  for (int r = 0; r < draws; ++r) {
    for (Eigen::Index k = 0; k < K; ++k) e[k] = rng.normal();
    maxima[static_cast<std::size_t>(r)] = (L * e).cwiseAbs().maxCoeff();
  }
  std::sort(maxima.begin(), maxima.end());
  const auto idx = static_cast<std::size_t>(std::ceil((1.0 - alpha) * draws)) - 1;
  return maxima[std::min(idx, maxima.size() - 1)];
}

Band joint_band(const Eigen::VectorXd& gamma, const Eigen::MatrixXd& cov, double alpha, Rng& rng, int draws) {
  if (gamma.size() != cov.rows()) throw EstimationError("band: gamma and cov sizes differ");
  Band band;
  band.critical_value = max_t_critical_value(cov, alpha, rng, draws, &band.repaired);
  const Eigen::VectorXd se = cov.diagonal().cwiseSqrt();
  band.lo = gamma - band.critical_value * se;
  band.hi = gamma + band.critical_value * se;
  return band;
}

Eigen::VectorXd rearrange_monotone(const Eigen::VectorXd& values) {
  Eigen::VectorXd out = values;
  std::sort(out.data(), out.data() + out.size());
  return out;
}

Band rearrange_monotone(const Band& band) {
  Band out = band;
  out.lo = rearrange_monotone(band.lo);
  out.hi = rearrange_monotone(band.hi);
  return out;
}

namespace {

struct GroupMean {
  double mean = 0.0;
  double var = 0.0;
  // Influence of each row on the mean, indexed by main-sample row.
  std::vector<std::pair<Eigen::Index, double>> influence;
};

GroupMean group_mean(const Eigen::VectorXd& g, const MainSample& m, const std::vector<Eigen::Index>& rows) {
  GroupMean out;
  double sw = 0.0, swg = 0.0;
  for (Eigen::Index i : rows) {
    sw += m.sweight[i];
    swg += m.sweight[i] * g[i];
  }
  if (sw <= 0.0) throw EstimationError("CLAN: extreme group has zero total weight");
  out.mean = swg / sw;
  std::map<std::int64_t, double> by_cluster;
  for (std::size_t q = 0; q < rows.size(); ++q) {
    const Eigen::Index i = rows[q];
    const double inf = m.sweight[i] * (g[i] - out.mean) / sw;
    out.influence.emplace_back(i, inf);
    const std::int64_t key = m.cluster.empty() ? static_cast<std::int64_t>(i) : m.cluster[static_cast<std::size_t>(i)];
    by_cluster[key] += inf;
  }
  const double c = static_cast<double>(by_cluster.size());
  if (c >= 2.0) {
    double ss = 0.0;
    for (const auto& [key, v] : by_cluster) ss += v * v;
    out.var = ss * c / (c - 1.0);
  }
  return out;
}

}  // namespace

ClanFit estimate_clan(const MainSample& m, const GroupScheme& groups, const Eigen::MatrixXd& g,
                      const std::vector<std::string>& names, double alpha) {
  const Eigen::Index n = m.size();
  if (g.rows() != n) throw EstimationError("CLAN: characteristic matrix has wrong row count");
  if (static_cast<Eigen::Index>(names.size()) != g.cols()) throw EstimationError("CLAN: names mismatch");
  std::vector<Eigen::Index> low, high;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = groups.membership[static_cast<std::size_t>(i)];
    if (k == 0) low.push_back(i);
    if (k == groups.K - 1) high.push_back(i);
  }
  if (low.empty() || high.empty()) throw EstimationError("CLAN: an extreme group is empty");
  const double z = normal_quantile(1.0 - alpha / 2.0);

  ClanFit fit;
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    const Eigen::VectorXd col = g.col(j);
    const GroupMean a = group_mean(col, m, low), b = group_mean(col, m, high);
    ClanVariable v;
    v.name = names[static_cast<std::size_t>(j)];
    v.delta1 = a.mean;
    v.deltaK = b.mean;
    v.diff = v.deltaK - v.delta1;
    v.se1 = std::sqrt(a.var);
    v.seK = std::sqrt(b.var);
    double cross = 0.0;
    if (!m.cluster.empty()) {
      // Clusters with rows in both extreme groups make the two means covary.
      std::map<std::int64_t, double> ia, ib;
      for (auto [i, x] : a.influence) ia[m.cluster[static_cast<std::size_t>(i)]] += x;
      for (auto [i, x] : b.influence) ib[m.cluster[static_cast<std::size_t>(i)]] += x;
      for (const auto& [key, x] : ia)
        if (auto it = ib.find(key); it != ib.end()) cross += x * it->second;
    }
    v.se_diff = std::sqrt(std::max(a.var + b.var - 2.0 * cross, 0.0));
    v.ci_lo = v.diff - z * v.se_diff;
    v.ci_hi = v.diff + z * v.se_diff;
    v.p_diff = v.se_diff > 0.0 ? 2.0 * (1.0 - normal_cdf(std::abs(v.diff) / v.se_diff)) : (v.diff == 0.0 ? 1.0 : 0.0);
    fit.variables.push_back(v);
  }
  return fit;
}

LearnerScores learner_scores(const BlpFit& blp, const GatesFit& gates) {
  return {blp.lambda, gates.lambda_bar};
}

}  // namespace hetfx
