#include "hetfx/learners.hpp"

#include <algorithm>
#include <cmath>

#include "hetfx/csv.hpp"
#include "hetfx/elastic_net.hpp"
#include "hetfx/error.hpp"
#include "hetfx/forest.hpp"
#include "hetfx/rng.hpp"

namespace hetfx {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::elastic_net: return "elastic_net";
    case LearnerKind::forest: return "forest";
    case LearnerKind::external: return "external";
  }
  return "?";
}

std::string to_string(TargetMode mode) {
  return mode == TargetMode::arm_difference ? "arm_difference" : "ht_joint";
}

double LearnerSpec::param(const std::string& key, double fallback) const {
  auto it = hyperparams.find(key);
  return it == hyperparams.end() ? fallback : it->second;
}

void LearnerSpec::validate() const {
  if (tuning.folds < 2) throw ConfigError(name + ": cv needs folds >= 2");
  if (tuning.repeats < 1) throw ConfigError(name + ": cv needs repeats >= 1");
  switch (kind) {
    case LearnerKind::elastic_net: {
      const double a = param("alpha", 1.0);
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(name + ": alpha must lie in [0,1]");
      if (tuning.kind == Tuning::Kind::fixed && !hyperparams.count("lambda"))
        throw ConfigError(name + ": fixed tuning needs a lambda");
      if (param("lambda", 0.0) < 0.0) throw ConfigError(name + ": lambda must be >= 0");
      break;
    }
    case LearnerKind::forest: {
      ForestParams fp;
      fp.trees = static_cast<int>(param("trees", fp.trees));
      fp.min_leaf = static_cast<int>(param("min_leaf", fp.min_leaf));
      fp.feature_fraction = param("feature_fraction", fp.feature_fraction);
      fp.max_depth = static_cast<int>(param("max_depth", fp.max_depth));
      fp.validate();
      break;
    }
    case LearnerKind::external:
      if (external_path.empty()) throw ConfigError(name + ": external learner needs a path");
      break;
  }
}

LearnerSpec LearnerSpec::parse(const std::string& text) {
  LearnerSpec spec;
  std::string head = text, options;
  if (auto open = text.find('['); open != std::string::npos) {
    if (text.back() != ']') throw ConfigError("learner '" + text + "': missing ']'");
    head = text.substr(0, open);
    options = text.substr(open + 1, text.size() - open - 2);
  }
  if (head == "elastic_net") {
    spec.kind = LearnerKind::elastic_net;
  } else if (head == "forest") {
    spec.kind = LearnerKind::forest;
    spec.tuning.kind = Tuning::Kind::fixed;
  } else if (head.rfind("external:", 0) == 0) {
    spec.kind = LearnerKind::external;
    spec.tuning.kind = Tuning::Kind::fixed;
    spec.external_path = head.substr(9);
  } else {
    throw ConfigError("unknown learner '" + head + "'");
  }
  spec.name = spec.kind == LearnerKind::external ? "external" : head;

  std::size_t pos = 0;
  while (pos < options.size()) {
    auto end = options.find(';', pos);
    if (end == std::string::npos) end = options.size();
    const std::string item = options.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("learner option '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
    if (key == "name") {
      spec.name = value;
    } else if (key == "target") {
      if (value == "ht_joint") spec.target_mode = TargetMode::ht_joint;
      else if (value == "arm_difference") spec.target_mode = TargetMode::arm_difference;
      else throw ConfigError("unknown target mode '" + value + "'");
    } else if (key == "tuning") {
      if (value == "fixed") spec.tuning.kind = Tuning::Kind::fixed;
      else if (value == "cv") spec.tuning.kind = Tuning::Kind::cv;
      else throw ConfigError("unknown tuning '" + value + "'");
    } else {
      auto v = parse_number(value);
      if (!v) throw ConfigError("learner option '" + key + "' needs a number");
      if (key == "folds") spec.tuning.folds = static_cast<int>(*v);
      else if (key == "repeats") spec.tuning.repeats = static_cast<int>(*v);
      else spec.hyperparams[key] = *v;
      if (key == "lambda") spec.tuning.kind = Tuning::Kind::fixed;
    }
  }
  spec.validate();
  return spec;
}

namespace {

// Min-max map of covariates onto [0,1] learned from the auxiliary rows.
struct Scaler {
  Eigen::RowVectorXd lo, inv_range;

  static Scaler fit(const Eigen::MatrixXd& Z) {
    Scaler s;
    s.lo = Z.colwise().minCoeff();
    const Eigen::RowVectorXd hi = Z.colwise().maxCoeff();
    s.inv_range.resize(Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      const double r = hi[j] - s.lo[j];
      s.inv_range[j] = r > 0.0 ? 1.0 / r : 0.0;
    }
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& Z) const {
    return (Z.rowwise() - lo).array().rowwise() * inv_range.array();
  }
};

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& v, std::span<const std::size_t> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(rows[k])];
  return out;
}

// Output map pred -> shift + scale * pred back onto the outcome scale.
struct OutputMap {
  double shift = 0.0;
  double scale = 1.0;
};

class LinearProxy final : public ProxyFunction {
 public:
  LinearProxy(Scaler scaler, LinearModel model, OutputMap out)
      : scaler_(std::move(scaler)), model_(std::move(model)), out_(out) {}
  Eigen::VectorXd evaluate(const Dataset& ds, std::span<const std::size_t> rows) const override {
    const Eigen::VectorXd pred = model_.predict(scaler_.apply(rows_of(ds.z(), rows)));
    return (pred.array() * out_.scale).array() + out_.shift;
  }

 private:
  Scaler scaler_;
  LinearModel model_;
  OutputMap out_;
};

class ForestProxy final : public ProxyFunction {
 public:
  ForestProxy(Scaler scaler, std::shared_ptr<const Forest> forest, OutputMap out)
      : scaler_(std::move(scaler)), forest_(std::move(forest)), out_(out) {}
  Eigen::VectorXd evaluate(const Dataset& ds, std::span<const std::size_t> rows) const override {
    Eigen::VectorXd pred = forest_ ? forest_->predict(scaler_.apply(rows_of(ds.z(), rows)))
                                   : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
    return (pred.array() * out_.scale).array() + out_.shift;
  }

 private:
  Scaler scaler_;
  std::shared_ptr<const Forest> forest_;
  OutputMap out_;
};

class DifferenceProxy final : public ProxyFunction {
 public:
  DifferenceProxy(std::shared_ptr<const ProxyFunction> plus, std::shared_ptr<const ProxyFunction> minus)
      : plus_(std::move(plus)), minus_(std::move(minus)) {}
  Eigen::VectorXd evaluate(const Dataset& ds, std::span<const std::size_t> rows) const override {
    return plus_->evaluate(ds, rows) - minus_->evaluate(ds, rows);
  }

 private:
  std::shared_ptr<const ProxyFunction> plus_, minus_;
};

class ColumnProxy final : public ProxyFunction {
 public:
  explicit ColumnProxy(Eigen::VectorXd values) : values_(std::move(values)) {}
  Eigen::VectorXd evaluate(const Dataset& ds, std::span<const std::size_t> rows) const override {
    if (static_cast<std::size_t>(values_.size()) != ds.n())
      throw DataError("external proxies do not match dataset row count");
    return rows_of(values_, rows);
  }

 private:
  Eigen::VectorXd values_;
};

ForestParams forest_params(const LearnerSpec& spec) {
  ForestParams fp;
  fp.trees = static_cast<int>(spec.param("trees", fp.trees));
  fp.min_leaf = static_cast<int>(spec.param("min_leaf", fp.min_leaf));
  fp.feature_fraction = spec.param("feature_fraction", fp.feature_fraction);
  fp.bootstrap = spec.param("bootstrap", 1.0) != 0.0;
  fp.max_depth = static_cast<int>(spec.param("max_depth", fp.max_depth));
  return fp;
}

// Fits one elastic net honouring the spec's tuning, recording the chosen
// hyperparameters under `tag`.
LinearModel fit_linear(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       Rng& rng, const std::string& tag, ProxyMeta& meta,
                       const ElasticNetOptions& options = {}) {
  if (spec.tuning.kind == Tuning::Kind::cv) {
    const auto tuned = tune_elastic_net(X, y, spec.tuning.folds, spec.tuning.repeats, rng, {}, options);
    meta.tuned[tag + ".alpha"] = tuned.alpha_mix;
    meta.tuned[tag + ".lambda"] = tuned.lambda;
    return tuned.model;
  }
  const double alpha = spec.param("alpha", 1.0), lambda = spec.param("lambda", 0.0);
  meta.tuned[tag + ".alpha"] = alpha;
  meta.tuned[tag + ".lambda"] = lambda;
  return fit_elastic_net(X, y, alpha, lambda, options).model;
}

struct AuxData {
  Scaler scaler;
  Eigen::MatrixXd z;   // scaled covariates
  Eigen::VectorXd y;   // scaled outcome
  Eigen::VectorXd d, h;
  OutputMap level;     // for B-type predictions
  OutputMap slope;     // for S-type (difference) predictions
};

AuxData prepare(const Dataset& ds, std::span<const std::size_t> aux) {
  AuxData a;
  const Eigen::MatrixXd z = rows_of(ds.z(), aux);
  a.scaler = Scaler::fit(z);
  a.z = a.scaler.apply(z);
  const Eigen::VectorXd y = rows_of(ds.y(), aux);
  const double lo = y.minCoeff();
  const double range = outcome_range(ds, aux);
  a.y = (y.array() - lo) / range;
  a.d = rows_of(ds.d(), aux);
  a.h = rows_of(ds.h(), aux);
  a.level = {lo, range};
  a.slope = {0.0, range};
  return a;
}

ProxyPair fit_arm_difference(const LearnerSpec& spec, const AuxData& a, Rng& rng, ProxyMeta meta) {
  std::vector<Eigen::Index> control, treated;
  for (Eigen::Index i = 0; i < a.d.size(); ++i) (a.d[i] == 1.0 ? treated : control).push_back(i);
  const Eigen::MatrixXd z0 = a.z(control, Eigen::all), z1 = a.z(treated, Eigen::all);
  const Eigen::VectorXd y0 = a.y(control), y1 = a.y(treated);

  std::shared_ptr<const ProxyFunction> f0, f1;
  if (spec.kind == LearnerKind::elastic_net) {
    f0 = std::make_shared<LinearProxy>(a.scaler, fit_linear(spec, z0, y0, rng, "b", meta), a.level);
    f1 = std::make_shared<LinearProxy>(a.scaler, fit_linear(spec, z1, y1, rng, "y1", meta), a.level);
  } else {
    const ForestParams fp = forest_params(spec);
    f0 = std::make_shared<ForestProxy>(a.scaler, std::make_shared<Forest>(fit_forest(z0, y0, fp, rng)), a.level);
    f1 = std::make_shared<ForestProxy>(a.scaler, std::make_shared<Forest>(fit_forest(z1, y1, fp, rng)), a.level);
  }
  auto s = std::make_shared<DifferenceProxy>(f1, f0);
  return ProxyPair(f0, s, std::move(meta));
}

double joint_objective(const Eigen::VectorXd& yh, const Eigen::VectorXd& h, const Eigen::VectorXd& b,
                       const Eigen::VectorXd& s) {
  return (yh - b.cwiseProduct(h) - s).squaredNorm();
}

ProxyPair fit_ht_joint(const LearnerSpec& spec, const AuxData& a, Rng& rng, ProxyMeta meta) {
  const Eigen::Index n = a.z.rows(), p = a.z.cols();
  const Eigen::VectorXd yh = a.y.cwiseProduct(a.h);

  if (spec.kind == LearnerKind::elastic_net) {
    // Design [H, H z, z]; the coefficient on H is B's intercept and stays
    // unpenalised, the fitted intercept is S's intercept.
    Eigen::MatrixXd X(n, 1 + 2 * p);
    X.col(0) = a.h;
    X.middleCols(1, p) = a.h.asDiagonal() * a.z;
    X.rightCols(p) = a.z;
    ElasticNetOptions opts;
    opts.penalty_factor.assign(static_cast<std::size_t>(1 + 2 * p), 1.0);
    opts.penalty_factor[0] = 0.0;
    const LinearModel joint = fit_linear(spec, X, yh, rng, "joint", meta, opts);
    LinearModel b, s;
    b.intercept = joint.coef[0];
    b.coef = joint.coef.segment(1, p);
    s.intercept = joint.intercept;
    s.coef = joint.coef.tail(p);
    return ProxyPair(std::make_shared<LinearProxy>(a.scaler, b, a.level),
                     std::make_shared<LinearProxy>(a.scaler, s, a.slope), std::move(meta));
  }

  // Forest: alternate S given B (target YH - BH) and B given S (weighted
  // regression of (YH - S)/H on z with weight H^2), keeping the best iterate.
  const ForestParams fp = forest_params(spec);
  const Eigen::VectorXd h2 = a.h.cwiseProduct(a.h);
  std::shared_ptr<const Forest> best_b, best_s;
  Eigen::VectorXd b_fit = Eigen::VectorXd::Zero(n), s_fit = Eigen::VectorXd::Zero(n);
  double best = joint_objective(yh, a.h, b_fit, s_fit);
  for (int round = 0; round < 2; ++round) {
    auto s_forest = std::make_shared<Forest>(fit_forest(a.z, yh - b_fit.cwiseProduct(a.h), fp, rng));
    Eigen::VectorXd s_new = s_forest->predict(a.z);
    double obj = joint_objective(yh, a.h, b_fit, s_new);
    if (obj < best) {
      best = obj;
      best_s = s_forest;
      s_fit = s_new;
    }
    const Eigen::VectorXd target = (yh - s_fit).cwiseQuotient(a.h);
    auto b_forest = std::make_shared<Forest>(fit_forest(a.z, target, fp, rng, &h2));
    Eigen::VectorXd b_new = b_forest->predict(a.z);
    obj = joint_objective(yh, a.h, b_new, s_fit);
    if (obj < best) {
      best = obj;
      best_b = b_forest;
      b_fit = b_new;
    }
  }
  // B is reported on the outcome scale; a missing forest means B = 0 on the
  // rescaled scale, i.e. the auxiliary outcome minimum.
  return ProxyPair(std::make_shared<ForestProxy>(a.scaler, best_b, a.level),
                   std::make_shared<ForestProxy>(a.scaler, best_s, a.slope), std::move(meta));
}

}  // namespace

ProxyValues ProxyPair::evaluate(const Dataset& ds, std::span<const std::size_t> rows) const {
  ProxyValues v;
  v.b = b_->evaluate(ds, rows);
  v.s = s_->evaluate(ds, rows);
  return v;
}

double outcome_range(const Dataset& ds, std::span<const std::size_t> rows) {
  if (rows.empty()) return 1.0;
  double lo = ds.y()[static_cast<Eigen::Index>(rows[0])], hi = lo;
  for (std::size_t r : rows) {
    lo = std::min(lo, ds.y()[static_cast<Eigen::Index>(r)]);
    hi = std::max(hi, ds.y()[static_cast<Eigen::Index>(r)]);
  }
  return hi > lo ? hi - lo : 1.0;
}

ProxyPair fit_proxies(const LearnerSpec& spec, const Dataset& ds, std::span<const std::size_t> aux,
                      Rng& rng) {
  spec.validate();
  ProxyMeta meta;
  meta.learner = spec.name;
  meta.training_hash = fnv1a64(aux.data(), aux.size() * sizeof(std::size_t));
  if (spec.kind == LearnerKind::external)
    return load_external_proxies(spec.external_path, ds.n(), spec.name);

  std::size_t treated = 0;
  for (std::size_t r : aux) treated += ds.d()[static_cast<Eigen::Index>(r)] == 1.0;
  if (treated == 0 || treated == aux.size())
    throw EstimationError("auxiliary sample is missing a treatment arm");

  const AuxData a = prepare(ds, aux);
  return spec.target_mode == TargetMode::arm_difference ? fit_arm_difference(spec, a, rng, std::move(meta))
                                                        : fit_ht_joint(spec, a, rng, std::move(meta));
}

JitterResult jitter_if_degenerate(const Eigen::VectorXd& values, Rng& rng, double variance) {
  JitterResult out{values, false};
  const double n = static_cast<double>(values.size());
  double var = 0.0;
  if (values.size() > 1) var = (values.array() - values.mean()).square().sum() / n;
  if (var < 1e-12) {
    const double sd = std::sqrt(variance);
    for (Eigen::Index i = 0; i < out.values.size(); ++i) out.values[i] += sd * rng.normal();
    out.jittered = true;
  }
  return out;
}

double ht_joint_objective(const Dataset& ds, std::span<const std::size_t> rows, const ProxyValues& proxies) {
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    const auto kk = static_cast<Eigen::Index>(k);
    const double r = ds.y()[i] * ds.h()[i] - proxies.b[kk] * ds.h()[i] - proxies.s[kk];
    total += r * r;
  }
  return total;
}

ProxyPair load_external_proxies(const std::string& path, std::size_t n_rows, const std::string& learner_name) {
  const CsvTable t = read_csv(path);
  const auto id = t.column_index("row_id"), bc = t.column_index("B"), sc = t.column_index("S");
  if (!id || !bc || !sc) throw DataError(path + ": external proxies need columns row_id,B,S");
  Eigen::VectorXd b = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_rows), std::nan(""));
  Eigen::VectorXd s = b;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto rid = parse_number(t.rows[r][*id]);
    auto bv = parse_number(t.rows[r][*bc]);
    auto sv = parse_number(t.rows[r][*sc]);
    if (!rid || !bv || !sv) throw DataError(path + ": non-numeric cell at data row " + std::to_string(r + 1));
    const double k = *rid;
    if (k < 0 || k >= static_cast<double>(n_rows) || k != std::floor(k))
      throw DataError(path + ": row_id " + t.rows[r][*id] + " out of range");
    const auto i = static_cast<Eigen::Index>(k);
    if (!std::isnan(b[i])) throw DataError(path + ": duplicate row_id " + t.rows[r][*id]);
    b[i] = *bv;
    s[i] = *sv;
  }
  if (b.hasNaN()) throw DataError(path + ": external proxies do not cover every row");
  ProxyMeta meta;
  meta.learner = learner_name;
  return ProxyPair(std::make_shared<ColumnProxy>(b), std::make_shared<ColumnProxy>(s), std::move(meta));
}

}  // namespace hetfx
