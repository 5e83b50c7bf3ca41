#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetfx/dataset.hpp"

namespace hetfx {

class Rng;

// Y = b0(Z) + D s0(Z) + sigma eps with one covariate Z and D ~ Bernoulli(p(Z)).
//   interactive:   Z ~ N(0,1), b0 = alpha0 + alpha1 Z, s0 = alpha2 + beta Z
//   figure_null:   Z ~ U(-1,1), b0 = 0, s0 = 0
//   figure_linear: Z ~ U(-1,1), b0 = 0, s0 = Z
//   custom:        Z ~ U(-1,1) (or normal), user b0 and s0
struct SimDesign {
  enum class Kind { interactive, figure_null, figure_linear, custom } kind = Kind::interactive;
  enum class ZDist { standard_normal, uniform } z_dist = ZDist::standard_normal;
  double alpha0 = 0.0, alpha1 = 0.0, alpha2 = 0.0, beta = 0.0, sigma = 1.0;
  std::size_t n = 100;
  double p = 0.5;
  // Overrides the constant p when set.
  std::function<double(double)> propensity;
  std::function<double(double)> b0, s0;  // custom only
  std::uint64_t seed = 0;

  static SimDesign interactive_design(std::size_t n, double beta, std::uint64_t seed, double alpha2 = 0.0);
  static SimDesign figure(bool heterogeneous, std::size_t n, std::uint64_t seed);

  double baseline(double z) const;
  double effect(double z) const;
  double draw_z(Rng& rng) const;
  void validate() const;
};

// Dataset plus ground truth at the sampled rows. The truth is for tests and
// oracles only; nothing in the estimation path reads it.
struct SimData {
  Dataset data;
  Eigen::VectorXd b0, s0;
};

SimData gen_design(const SimDesign& design);

void write_sim_csv(const SimData& sim, const std::string& path);

// Two-sided p-value for the Z*D coefficient in the full-sample OLS of Y on
// (1, Z, D, Z*D) with HC0 standard errors. Z is the first covariate.
double standard_het_test(const Dataset& ds);

struct PowerCell {
  std::size_t n = 0;
  double beta = 0.0;
  std::size_t reps = 0;
  std::size_t rejections = 0;
  double rate() const { return reps ? static_cast<double>(rejections) / static_cast<double>(reps) : 0.0; }
  double mc_se() const;
};

struct PowerTable {
  std::string method;  // "standard" or "proposed"
  std::vector<PowerCell> cells;
  const PowerCell& at(std::size_t n, double beta) const;
};

struct PowerOptions {
  std::vector<std::size_t> ns{100, 200, 400};
  std::vector<double> betas{0.0, 0.2, 0.4};
  std::size_t reps = 500;
  std::size_t splits = 50;
  double alpha = 0.05;
  double alpha2 = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;
};

// Rejection rates of the standard interaction t-test.
PowerTable standard_power(const PowerOptions& opt);
// Rejection rates of the split-adjusted BLP test of beta2 = 0 using least
// squares proxies per arm (elastic net with lambda = 0) and the weighted
// strategy; reject when the adjusted p-value is <= alpha.
PowerTable proposed_power(const PowerOptions& opt);

// Adjusted two-sided p-value of beta2 = 0 for one dataset; exposed for tests.
double proposed_het_pvalue(const Dataset& ds, std::size_t splits, double alpha, std::uint64_t seed);

std::string power_csv(const PowerTable& table);

// Monte Carlo E[s0(Z) | S(Z) in group k] over mc_n fresh draws of Z, with
// groups formed by the same quantile rule as the estimator.
Eigen::VectorXd oracle_gates(const SimDesign& design, const std::function<double(double)>& S, int K,
                             std::size_t mc_n, std::uint64_t seed);

// Runs f(i) for i in [0, count) on a pool of threads (0 = hardware).
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& f);

}  // namespace hetfx
