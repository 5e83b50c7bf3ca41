#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hetfx {

// Weighted least squares fit with an HC0 (or cluster-robust) sandwich
// covariance. Dropped (collinear) columns carry coefficient 0 and zero rows
// and columns in `cov`.
struct WlsFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  Eigen::VectorXd residuals;
  std::size_t n_used = 0;
  std::vector<std::size_t> dropped_cols;
  // |R_00| / |R_rr| of the retained pivoted QR factor.
  double condition = 1.0;

  double se(Eigen::Index j) const { return std::sqrt(std::max(cov(j, j), 0.0)); }
  bool dropped(std::size_t j) const;
};

struct WlsOptions {
  // Columns whose QR pivot falls below this fraction of the largest pivot
  // are dropped.
  double pivot_tolerance = 1e-10;
};

// Minimises sum_i w_i (y_i - x_i'b)^2 via column-pivoted QR of diag(sqrt w) X.
// cov = (X'WX)^-1 M (X'WX)^-1 with M = sum_i w_i^2 e_i^2 x_i x_i', or, when
// `cluster` is nonempty, M = sum_g s_g s_g' with s_g = sum_{i in g} w_i e_i x_i.
WlsFit fit_weighted_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w,
                        std::span<const std::int64_t> cluster = {},
                        const WlsOptions& options = {});

}  // namespace hetfx
