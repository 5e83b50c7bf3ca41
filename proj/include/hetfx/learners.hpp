#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetfx/dataset.hpp"

namespace hetfx {

class Rng;

enum class LearnerKind { elastic_net, forest, external };
enum class TargetMode { arm_difference, ht_joint };

struct Tuning {
  enum class Kind { fixed, cv } kind = Kind::cv;
  int folds = 2;
  int repeats = 2;
};

// Declares one proxy learner. Recognised hyperparameters:
//   elastic_net: alpha, lambda (used when tuning is fixed)
//   forest:      trees, min_leaf, feature_fraction, bootstrap, max_depth
struct LearnerSpec {
  std::string name;
  LearnerKind kind = LearnerKind::elastic_net;
  std::map<std::string, double> hyperparams;
  Tuning tuning;
  TargetMode target_mode = TargetMode::arm_difference;
  std::string external_path;  // kind == external

  double param(const std::string& key, double fallback) const;
  void validate() const;

  // Parses "elastic_net", "forest", "external:<path>", optionally followed by
  // "[key=value;...]", e.g. "elastic_net[lambda=0;alpha=1]". A `lambda` key on
  // an elastic net switches tuning to fixed; `target=ht_joint` selects the
  // joint objective.
  static LearnerSpec parse(const std::string& text);
};

std::string to_string(LearnerKind kind);
std::string to_string(TargetMode mode);

// Proxy values on a set of rows; the jitter flags are set by
// jitter_if_degenerate when it fires.
struct ProxyValues {
  Eigen::VectorXd b;
  Eigen::VectorXd s;
  bool b_jittered = false;
  bool s_jittered = false;
};

struct ProxyMeta {
  std::string learner;
  std::map<std::string, double> tuned;
  std::uint64_t training_hash = 0;
};

class ProxyFunction {
 public:
  virtual ~ProxyFunction() = default;
  virtual Eigen::VectorXd evaluate(const Dataset& ds, std::span<const std::size_t> rows) const = 0;
};

// Frozen predictors B and S. Evaluation is deterministic and never reads
// outcomes.
class ProxyPair {
 public:
  ProxyPair(std::shared_ptr<const ProxyFunction> b, std::shared_ptr<const ProxyFunction> s,
            ProxyMeta meta)
      : b_(std::move(b)), s_(std::move(s)), meta_(std::move(meta)) {}

  ProxyValues evaluate(const Dataset& ds, std::span<const std::size_t> rows) const;
  const ProxyMeta& meta() const { return meta_; }

 private:
  std::shared_ptr<const ProxyFunction> b_, s_;
  ProxyMeta meta_;
};

// Trains B and S on the auxiliary rows only. Covariates and outcome are
// rescaled to [0,1] using auxiliary-sample ranges before training, and
// predictions are mapped back to the outcome scale.
ProxyPair fit_proxies(const LearnerSpec& spec, const Dataset& ds, std::span<const std::size_t> aux,
                      Rng& rng);

// Outcome range over the auxiliary rows; the jitter variance is defined on
// the [0,1]-rescaled outcome so callers scale it by range^2.
double outcome_range(const Dataset& ds, std::span<const std::size_t> rows);

struct JitterResult {
  Eigen::VectorXd values;
  bool jittered = false;
};

// Adds iid N(0, variance) noise when the population variance of `values`
// is below 1e-12; otherwise returns the input unchanged.
JitterResult jitter_if_degenerate(const Eigen::VectorXd& values, Rng& rng, double variance = 0.1);

// Objective sum_i (Y_i H_i - B_i H_i - S_i)^2 used by the ht_joint target.
double ht_joint_objective(const Dataset& ds, std::span<const std::size_t> rows,
                          const ProxyValues& proxies);

// External proxies: CSV with columns row_id,B,S keyed by 0-based data row.
ProxyPair load_external_proxies(const std::string& path, std::size_t n_rows,
                                const std::string& learner_name);

}  // namespace hetfx
