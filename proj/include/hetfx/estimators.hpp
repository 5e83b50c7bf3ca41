#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetfx/dataset.hpp"
#include "hetfx/learners.hpp"

namespace hetfx {

class Rng;

enum class Strategy { weighted, ht };
std::string to_string(Strategy s);

// Main-sample view consumed by the estimators: per-row data restricted to M
// plus the frozen proxy values on those rows.
struct MainSample {
  Eigen::VectorXd y, d, p, w, h, sweight;
  Eigen::VectorXd b, s;
  Eigen::MatrixXd controls;
  std::vector<std::string> control_names;
  std::vector<std::int64_t> cluster;  // empty when unclustered

  Eigen::Index size() const { return y.size(); }
};

MainSample make_main_sample(const Dataset& ds, std::span<const std::size_t> rows,
                            const ProxyValues& proxies);

struct BlpFit {
  double beta1 = 0.0;  // ATE
  double beta2 = 0.0;  // heterogeneity loading
  Eigen::VectorXd nuisance;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double lambda = 0.0;  // beta2^2 Var_M(S)
  Strategy strategy = Strategy::weighted;
  std::vector<std::string> dropped;
  double condition = 1.0;

  double se1() const { return std::sqrt(std::max(cov(0, 0), 0.0)); }
  double se2() const { return std::sqrt(std::max(cov(1, 1), 0.0)); }
};

// Strategy weighted: WLS of Y on [1, B, S, controls, D-p, (D-p)(S-Sbar)] with
// weight w * sweight. Strategy ht: OLS of YH on [H [1, B, S, controls], 1,
// S-Sbar] with weight sweight. Sbar is the main-sample mean of S.
BlpFit estimate_blp(const MainSample& m, Strategy strategy);

// Quantile groups of S on M. Group of row i is floor((r_i + 1/2) K / n) where
// r_i is the 0-based average rank of S_i, so tied values share a group and
// group sizes differ by at most one without ties. cuts[k] is the smallest S
// in group k (cuts[0] = -inf, cuts[K] = +inf).
struct GroupScheme {
  int K = 0;
  std::vector<double> cuts;
  std::vector<int> membership;  // 0-based group per row
  std::vector<std::size_t> sizes;
};

GroupScheme make_groups(const Eigen::VectorXd& s, int K, bool allow_single_group = false);

struct Band {
  Eigen::VectorXd lo, hi;
  double critical_value = 0.0;
  bool repaired = false;  // covariance was clipped to PSD
};

struct GatesFit {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd cov;
  double lambda_bar = 0.0;
  Strategy strategy = Strategy::weighted;
  GroupScheme groups;
  std::vector<std::string> dropped;
  // Wald test of gamma_1 = ... = gamma_K.
  double homogeneity_stat = 0.0;
  double homogeneity_p = 1.0;

  Eigen::VectorXd se() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

struct GatesOptions {
  bool allow_single_group = false;
};

// Strategy weighted: WLS of Y on [1, B, S, controls, (D-p) 1(G_k)] with weight
// w * sweight. Strategy ht: OLS of YH on [H [1, B, S, controls], 1(G_k)] with
// weight sweight.
GatesFit estimate_gates(const MainSample& m, const GroupScheme& groups, Strategy strategy);
GatesFit estimate_gates(const MainSample& m, int K, Strategy strategy, const GatesOptions& options = {});

// Joint (1-alpha) band gamma_k +- c sigma_k, with c the empirical (1-alpha)
// quantile of max_k |t_k| over `draws` Gaussian draws with the correlation
// matrix of `cov`. A non-PSD correlation is repaired by clipping eigenvalues
// at zero (Band::repaired).
Band joint_band(const Eigen::VectorXd& gamma, const Eigen::MatrixXd& cov, double alpha, Rng& rng,
                int draws = 10000);
double max_t_critical_value(const Eigen::MatrixXd& cov, double alpha, Rng& rng, int draws,
                            bool* repaired = nullptr);

// Monotone rearrangement: sorts ascending. For a band, each envelope is
// sorted separately.
Eigen::VectorXd rearrange_monotone(const Eigen::VectorXd& values);
Band rearrange_monotone(const Band& band);

struct ClanVariable {
  std::string name;
  double delta1 = 0.0, deltaK = 0.0, diff = 0.0;
  double se1 = 0.0, seK = 0.0, se_diff = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // (1-alpha) CI for diff
  double p_diff = 1.0;              // two-sided p for diff = 0
};

struct ClanFit {
  std::vector<ClanVariable> variables;
};

// Weighted (sweight) means of each characteristic in the least (G_1) and most
// (G_K) affected groups. Standard errors use the unequal-variance two-sample
// formula; with clusters the deviations are summed within cluster first.
ClanFit estimate_clan(const MainSample& m, const GroupScheme& groups, const Eigen::MatrixXd& g,
                      const std::vector<std::string>& names, double alpha);

struct LearnerScores {
  double lambda = 0.0;
  double lambda_bar = 0.0;
};

LearnerScores learner_scores(const BlpFit& blp, const GatesFit& gates);

}  // namespace hetfx
