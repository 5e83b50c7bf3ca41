#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace hetfx {

class Rng;

struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coef;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return intercept + x.dot(coef);
  }
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    return (X * coef).array() + intercept;
  }
};

struct ElasticNetOptions {
  double tolerance = 1e-7;  // max coefficient change per sweep (standardised scale)
  long max_sweeps = 100000;
  // Per-column multiplier on the penalty; empty means all ones.
  std::vector<double> penalty_factor;
  bool record_objective = false;
};

struct ElasticNetFit {
  LinearModel model;
  long sweeps = 0;
  // Objective after each sweep when record_objective is set.
  std::vector<double> objective_trace;
};

// Cyclic coordinate descent with soft-thresholding on column-standardised X
// (mean 0, mean square 1) and centred y. Minimises
//   (2n)^-1 ||y - Xb||^2 + lambda [alpha ||b||_1 + (1 - alpha) ||b||_2^2 / 2]
// in the standardised coordinates; the intercept is unpenalised. lambda = 0
// is solved directly by least squares. Constant columns get coefficient 0.
ElasticNetFit fit_elastic_net(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double alpha_mix, double lambda,
                              const ElasticNetOptions& options = {});

// Fits a decreasing lambda sequence with warm starts.
std::vector<LinearModel> fit_elastic_net_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              double alpha_mix, const std::vector<double>& lambdas,
                                              const ElasticNetOptions& options = {});

// Smallest lambda at which every penalised coefficient is zero. alpha below
// 1e-3 is treated as 1e-3 so the ridge end of the grid stays finite.
double elastic_net_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              double alpha_mix, const std::vector<double>& penalty_factor = {});

struct ElasticNetGrid {
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  int n_lambda = 20;
  double decades = 4.0;
};

struct TunedElasticNet {
  LinearModel model;
  double alpha_mix = 0.0;
  double lambda = 0.0;
  double cv_mse = 0.0;
};

// Repeated k-fold cross-validation over the (alpha, lambda) grid, then a
// refit on all rows at the winning pair.
TunedElasticNet tune_elastic_net(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int folds,
                                 int repeats, Rng& rng, const ElasticNetGrid& grid = {},
                                 const ElasticNetOptions& options = {});

}  // namespace hetfx
