#include "hetfx/elastic_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"

namespace hetfx {

namespace {

struct Standardized {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd x_mean, x_scale;  // scale 0 marks a constant column
  double y_mean = 0.0;
};

Standardized standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() != y.size()) throw EstimationError("elastic net: X and y differ in length");
  if (X.rows() == 0) throw EstimationError("elastic net: no rows");
  if (!X.allFinite() || !y.allFinite()) throw DataError("elastic net: non-finite input");
  const double n = static_cast<double>(X.rows());
  Standardized s;
  s.x_mean = X.colwise().mean().transpose();
  s.X = X.rowwise() - s.x_mean.transpose();
  s.x_scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double ms = s.X.col(j).squaredNorm() / n;
    const double sd = std::sqrt(ms);
    if (sd > 1e-12 * (1.0 + std::abs(s.x_mean[j]))) {
      s.x_scale[j] = sd;
      s.X.col(j) /= sd;
    } else {
      s.x_scale[j] = 0.0;
      s.X.col(j).setZero();
    }
  }
  s.y_mean = y.mean();
  s.y = y.array() - s.y_mean;
  return s;
}

LinearModel to_original(const Standardized& s, const Eigen::VectorXd& b) {
  LinearModel m;
  m.coef = Eigen::VectorXd::Zero(b.size());
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (s.x_scale[j] > 0.0) m.coef[j] = b[j] / s.x_scale[j];
  m.intercept = s.y_mean - s.x_mean.dot(m.coef);
  return m;
}

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

std::vector<double> penalty_factors(const ElasticNetOptions& o, Eigen::Index p) {
  if (o.penalty_factor.empty()) return std::vector<double>(static_cast<std::size_t>(p), 1.0);
  if (static_cast<Eigen::Index>(o.penalty_factor.size()) != p)
    throw EstimationError("elastic net: penalty_factor length mismatch");
  return o.penalty_factor;
}

double objective(const Standardized& s, const Eigen::VectorXd& r, const Eigen::VectorXd& b,
                 double alpha, double lambda, const std::vector<double>& pf) {
  const double n = static_cast<double>(s.X.rows());
  double pen = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    pen += pf[static_cast<std::size_t>(j)] *
           (alpha * std::abs(b[j]) + 0.5 * (1.0 - alpha) * b[j] * b[j]);
  return r.squaredNorm() / (2.0 * n) + lambda * pen;
}

// Runs coordinate descent from `b` (standardised scale), updating b in place.
long descend(const Standardized& s, Eigen::VectorXd& b, double alpha, double lambda,
             const std::vector<double>& pf, const ElasticNetOptions& o,
             std::vector<double>* trace) {
  const double n = static_cast<double>(s.X.rows());
  Eigen::VectorXd r = s.y - s.X * b;
  for (long sweep = 1; sweep <= o.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (s.x_scale[j] == 0.0) continue;
      const double old = b[j];
      const double z = s.X.col(j).dot(r) / n + old;
      const double pj = pf[static_cast<std::size_t>(j)];
      const double updated = soft_threshold(z, lambda * alpha * pj) / (1.0 + lambda * (1.0 - alpha) * pj);
      if (updated != old) {
        r.noalias() -= (updated - old) * s.X.col(j);
        b[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (trace) trace->push_back(objective(s, r, b, alpha, lambda, pf));
    if (max_change < o.tolerance) return sweep;
  }
  throw ConvergenceError("elastic net did not converge within " + std::to_string(o.max_sweeps) +
                             " sweeps",
                         o.max_sweeps);
}

void check_params(double alpha, double lambda) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("elastic net: alpha_mix must lie in [0,1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("elastic net: lambda must be >= 0");
}

}  // namespace

ElasticNetFit fit_elastic_net(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha_mix,
                              double lambda, const ElasticNetOptions& options) {
  check_params(alpha_mix, lambda);
  const Standardized s = standardize(X, y);
  const auto pf = penalty_factors(options, X.cols());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  ElasticNetFit fit;
  if (lambda == 0.0) {
    if (X.cols() > 0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s.X);
      b = qr.solve(s.y);
      for (Eigen::Index j = 0; j < b.size(); ++j)
        if (s.x_scale[j] == 0.0 || !std::isfinite(b[j])) b[j] = 0.0;
    }
    if (options.record_objective) {
      Eigen::VectorXd r = s.y - s.X * b;
      fit.objective_trace.push_back(objective(s, r, b, alpha_mix, 0.0, pf));
    }
  } else {
    fit.sweeps = descend(s, b, alpha_mix, lambda, pf, options,
                         options.record_objective ? &fit.objective_trace : nullptr);
  }
  fit.model = to_original(s, b);
  return fit;
}

std::vector<LinearModel> fit_elastic_net_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              double alpha_mix, const std::vector<double>& lambdas,
                                              const ElasticNetOptions& options) {
  const Standardized s = standardize(X, y);
  const auto pf = penalty_factors(options, X.cols());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  std::vector<LinearModel> models;
  models.reserve(lambdas.size());
  for (double lambda : lambdas) {
    check_params(alpha_mix, lambda);
    if (lambda > 0.0) descend(s, b, alpha_mix, lambda, pf, options, nullptr);
    models.push_back(to_original(s, b));
  }
  return models;
}

double elastic_net_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha_mix,
                              const std::vector<double>& penalty_factor) {
  const Standardized s = standardize(X, y);
  const double n = static_cast<double>(X.rows());
  const double a = std::max(alpha_mix, 1e-3);
  double best = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.x_scale[j] == 0.0) continue;
    const double pf = penalty_factor.empty() ? 1.0 : penalty_factor[static_cast<std::size_t>(j)];
    if (pf <= 0.0) continue;
    best = std::max(best, std::abs(s.X.col(j).dot(s.y)) / (n * a * pf));
  }
  return best;
}

TunedElasticNet tune_elastic_net(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int folds,
                                 int repeats, Rng& rng, const ElasticNetGrid& grid,
                                 const ElasticNetOptions& options) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (repeats < 1) throw ConfigError("cross-validation needs at least 1 repeat");
  const Eigen::Index n = X.rows();
  if (n < 2 * folds) throw EstimationError("too few rows for cross-validation");

  // Lambda grids are fixed from the full training data so every fold scores
  // the same candidates.
  std::vector<std::vector<double>> lambdas(grid.alphas.size());
  for (std::size_t a = 0; a < grid.alphas.size(); ++a) {
    double lmax = elastic_net_lambda_max(X, y, grid.alphas[a], options.penalty_factor);
    if (lmax <= 0.0) lmax = 1e-4;
    for (int k = 0; k < grid.n_lambda; ++k) {
      const double frac = grid.n_lambda == 1 ? 0.0 : static_cast<double>(k) / (grid.n_lambda - 1);
      lambdas[a].push_back(lmax * std::pow(10.0, -grid.decades * frac));
    }
  }

  std::vector<std::vector<double>> sse(grid.alphas.size(),
                                       std::vector<double>(static_cast<std::size_t>(grid.n_lambda), 0.0));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int rep = 0; rep < repeats; ++rep) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<Eigen::Index>(order));
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index i = 0; i < n; ++i)
        (i % folds == f ? test : train).push_back(order[static_cast<std::size_t>(i)]);
      const Eigen::MatrixXd Xtr = X(train, Eigen::all);
      const Eigen::VectorXd ytr = y(train);
      const Eigen::MatrixXd Xte = X(test, Eigen::all);
      const Eigen::VectorXd yte = y(test);
      if ((ytr.array() - ytr.mean()).abs().maxCoeff() == 0.0)
        throw EstimationError("cross-validation fold has a zero-variance outcome");
      for (std::size_t a = 0; a < grid.alphas.size(); ++a) {
        const auto path = fit_elastic_net_path(Xtr, ytr, grid.alphas[a], lambdas[a], options);
        for (std::size_t l = 0; l < path.size(); ++l)
          sse[a][l] += (yte - path[l].predict(Xte)).squaredNorm();
      }
    }
  }

  TunedElasticNet best;
  best.cv_mse = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < grid.alphas.size(); ++a)
    for (std::size_t l = 0; l < lambdas[a].size(); ++l) {
      const double mse = sse[a][l] / static_cast<double>(n * repeats);
      if (mse < best.cv_mse) {
        best.cv_mse = mse;
        best.alpha_mix = grid.alphas[a];
        best.lambda = lambdas[a][l];
      }
    }
  best.model = fit_elastic_net(X, y, best.alpha_mix, best.lambda, options).model;
  return best;
}

}  // namespace hetfx
