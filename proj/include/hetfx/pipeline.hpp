#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetfx/dataset.hpp"
#include "hetfx/estimators.hpp"
#include "hetfx/learners.hpp"
#include "hetfx/splits.hpp"
#include "hetfx/vein.hpp"

namespace hetfx {

inline constexpr const char* kVersion = "0.1.0";

enum class StrategyChoice { weighted, ht, both };
std::string to_string(StrategyChoice s);
StrategyChoice parse_strategy(const std::string& text);
std::vector<Strategy> strategies_of(StrategyChoice s);

struct RunConfig {
  std::string data_path;
  DatasetSchema schema;
  PropensitySpec propensity = 0.5;
  PropensityBounds bounds;

  std::vector<LearnerSpec> learners;
  std::size_t splits = 100;
  double alpha = 0.05;
  int groups = 5;
  StrategyChoice strategy = StrategyChoice::weighted;
  Sidedness sidedness = Sidedness::two_sided;
  SplitOptions split_options;

  // CLAN characteristics; `clan_auto` picks up to three covariates most
  // correlated with S.
  std::vector<std::string> clan;
  bool clan_auto = false;

  std::uint64_t seed = 0;
  std::string out_dir;
  bool plot = false;
  bool skip_failed_splits = false;
  int threads = 0;  // 0 = hardware concurrency
  int band_draws = 10000;
  // Jitter variance on the [0,1]-rescaled outcome scale.
  double jitter_variance = 0.1;

  // Turning GATES off also disables CLAN and the band; used by the
  // simulation studies that only need BLP.
  bool run_gates = true;
  bool allow_single_group = false;
  // Processing order only; results are always indexed by split.
  bool reverse_split_order = false;

  void validate() const;
};

// Stable text identity of a learner spec (keys its RNG streams).
std::string canonical_learner(const LearnerSpec& spec);

// Per split, per learner, per strategy numbers kept for aggregation.
struct ClanStat {
  double delta1 = 0.0, se1 = 0.0, deltaK = 0.0, seK = 0.0, diff = 0.0, se_diff = 0.0;
};

struct StrategyStat {
  double beta1 = 0.0, se1 = 0.0, beta2 = 0.0, se2 = 0.0, lambda = 0.0;
  std::vector<std::string> blp_dropped;
  double blp_condition = 1.0;
  // GATES (empty when disabled)
  Eigen::VectorXd gamma, gamma_se;
  double gap = 0.0, gap_se = 0.0;  // gamma_K - gamma_1
  double lambda_bar = 0.0;
  double homogeneity_p = 1.0;
  Eigen::VectorXd sorted_gamma, band_lo, band_hi;
  double band_critical = 0.0;
  bool band_repaired = false;
};

struct LearnerSplit {
  std::vector<StrategyStat> by_strategy;
  bool b_jittered = false, s_jittered = false;
  std::map<std::string, double> tuned;
  // Aligned with Report::candidate_names.
  std::vector<ClanStat> clan;
  std::vector<double> clan_corr;  // |corr(candidate, S)| on the main sample
};

struct SplitResult {
  std::size_t index = 0;
  bool failed = false;
  std::string stage, error;
  std::size_t aux_size = 0, main_size = 0;
  std::vector<LearnerSplit> learners;
};

struct LearnerChoice {
  std::size_t blp = 0, gates = 0;
  bool blp_tie = false, gates_tie = false;
};

// Argmax of the median scores, first declared on ties.
LearnerChoice select_best_learners(const std::vector<std::vector<double>>& lambda,
                                   const std::vector<std::vector<double>>& lambda_bar);

struct ClanSummary {
  std::string name;
  VeinSummary delta1, deltaK, diff;
};

struct BandRow {
  int group = 0;
  double point = 0.0, lo = 0.0, hi = 0.0;
};

struct StrategyReport {
  Strategy strategy = Strategy::weighted;
  VeinSummary beta1, beta2;
  std::vector<VeinSummary> gamma;
  std::optional<VeinSummary> gap;
  AdjustedPvalue homogeneity;
  std::vector<BandRow> band;
  std::vector<ClanSummary> clan;
};

struct LearnerScoreRow {
  std::string name;
  double lambda_median = 0.0;
  double lambda_bar_median = 0.0;
};

struct Report {
  RunConfig config;
  std::size_t n = 0;
  std::uint64_t data_hash = 0;
  std::vector<LearnerScoreRow> scores;  // primary strategy
  LearnerChoice choice;
  std::vector<std::string> clan_variables;
  std::vector<StrategyReport> strategies;  // in strategies_of(config.strategy) order
  std::vector<SplitResult> splits;
  std::size_t failed_splits = 0;
  std::vector<std::string> candidate_names;

  const StrategyReport& primary() const { return strategies.front(); }
};

Report run_analysis(const RunConfig& cfg);
Report run_analysis(const Dataset& ds, const RunConfig& cfg);

}  // namespace hetfx
