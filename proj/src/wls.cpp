#include "hetfx/wls.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "hetfx/error.hpp"

namespace hetfx {

bool WlsFit::dropped(std::size_t j) const {
  return std::find(dropped_cols.begin(), dropped_cols.end(), j) != dropped_cols.end();
}

WlsFit fit_weighted_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w, std::span<const std::int64_t> cluster,
                        const WlsOptions& options) {
  const Eigen::Index n = X.rows(), k = X.cols();
  if (y.size() != n || w.size() != n) throw EstimationError("wls: X, y and w differ in length");
  if (!cluster.empty() && static_cast<Eigen::Index>(cluster.size()) != n)
    throw EstimationError("wls: cluster ids differ in length");
  if (k == 0) throw EstimationError("wls: design has no columns");
  if (!X.allFinite() || !y.allFinite() || !w.allFinite())
    throw EstimationError("wls: non-finite input");
  if ((w.array() < 0.0).any()) throw EstimationError("wls: negative weight");

  std::size_t n_used = 0;
  for (Eigen::Index i = 0; i < n; ++i) n_used += w[i] > 0.0;
  if (n_used == 0) throw EstimationError("wls: all weights are zero");

  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  qr.setThreshold(options.pivot_tolerance);
  const Eigen::Index rank = qr.rank();
  if (rank == 0) throw EstimationError("wls: all columns dropped as collinear");

  std::vector<Eigen::Index> keep;
  for (Eigen::Index r = 0; r < rank; ++r) keep.push_back(qr.colsPermutation().indices()[r]);
  std::sort(keep.begin(), keep.end());
  if (static_cast<Eigen::Index>(n_used) < rank)
    throw EstimationError("wls: fewer rows with positive weight (" + std::to_string(n_used) +
                          ") than retained columns (" + std::to_string(rank) + ")");

  WlsFit fit;
  fit.n_used = n_used;
  for (Eigen::Index j = 0; j < k; ++j)
    if (std::find(keep.begin(), keep.end(), j) == keep.end())
      fit.dropped_cols.push_back(static_cast<std::size_t>(j));

  Eigen::MatrixXd Xr(n, rank);
  for (Eigen::Index c = 0; c < rank; ++c) Xr.col(c) = Xw.col(keep[static_cast<std::size_t>(c)]);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_r(Xr);
  const Eigen::VectorXd beta_r = qr_r.solve(yw);

  // (X'WX)^-1 = P R^-1 R^-T P'.
  const Eigen::MatrixXd R = qr_r.matrixR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(rank, rank));
  const Eigen::MatrixXd bread_p = Rinv * Rinv.transpose();
  const auto& perm = qr_r.colsPermutation();
  const Eigen::MatrixXd bread = perm * bread_p * perm.transpose();
  {
    const Eigen::VectorXd diag = R.diagonal().cwiseAbs();
    fit.condition = diag.maxCoeff() / std::max(diag.minCoeff(), 1e-300);
  }

  const Eigen::MatrixXd Xr_raw = [&] {
    Eigen::MatrixXd m(n, rank);
    for (Eigen::Index c = 0; c < rank; ++c) m.col(c) = X.col(keep[static_cast<std::size_t>(c)]);
    return m;
  }();
  fit.residuals = y - Xr_raw * beta_r;
  // Scores s_i = w_i e_i x_i.
  const Eigen::MatrixXd scores = (w.cwiseProduct(fit.residuals)).asDiagonal() * Xr_raw;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(rank, rank);
  if (cluster.empty()) {
    meat.noalias() = scores.transpose() * scores;
  } else {
    std::unordered_map<std::int64_t, Eigen::Index> slot;
    std::vector<Eigen::Index> group(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      auto [it, inserted] = slot.emplace(cluster[static_cast<std::size_t>(i)], static_cast<Eigen::Index>(slot.size()));
      group[static_cast<std::size_t>(i)] = it->second;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(slot.size()), rank);
    for (Eigen::Index i = 0; i < n; ++i) sums.row(group[static_cast<std::size_t>(i)]) += scores.row(i);
    meat.noalias() = sums.transpose() * sums;
  }
  Eigen::MatrixXd cov_r = bread * meat * bread;
  cov_r = 0.5 * (cov_r + cov_r.transpose());

  fit.coef = Eigen::VectorXd::Zero(k);
  fit.cov = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < rank; ++a) {
    fit.coef[keep[static_cast<std::size_t>(a)]] = beta_r[a];
    for (Eigen::Index b = 0; b < rank; ++b)
      fit.cov(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(b)]) = cov_r(a, b);
  }
  return fit;
}

}  // namespace hetfx
