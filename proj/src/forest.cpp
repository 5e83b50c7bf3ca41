#include "hetfx/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"

namespace hetfx {

void ForestParams::validate() const {
  if (trees < 1) throw ConfigError("forest: trees must be >= 1");
  if (min_leaf < 1) throw ConfigError("forest: min_leaf must be >= 1");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0))
    throw ConfigError("forest: feature_fraction must lie in (0,1]");
  if (max_depth < 0) throw ConfigError("forest: max_depth must be >= 0");
}

double RegressionTree::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int k = 0;
  while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
    const Node& node = nodes_[static_cast<std::size_t>(k)];
    k = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes_[static_cast<std::size_t>(k)].value;
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
              const ForestParams& params, Rng& rng)
      : X_(X), y_(y), w_(w), params_(params), rng_(rng) {
    const auto p = static_cast<int>(X.cols());
    mtry_ = std::clamp(static_cast<int>(std::ceil(params.feature_fraction * p)), 1, std::max(p, 1));
    features_.resize(static_cast<std::size_t>(p));
    std::iota(features_.begin(), features_.end(), 0);
  }

  RegressionTree build(std::vector<Eigen::Index> rows) {
    tree_ = RegressionTree();
    rows_ = std::move(rows);
    grow(0, rows_.size(), 0);
    return std::move(tree_);
  }

 private:
  double leaf_value(std::size_t begin, std::size_t end) const {
    double sw = 0.0, swy = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      sw += w_[rows_[k]];
      swy += w_[rows_[k]] * y_[rows_[k]];
    }
    if (sw > 0.0) return swy / sw;
    double s = 0.0;
    for (std::size_t k = begin; k < end; ++k) s += y_[rows_[k]];
    return s / static_cast<double>(end - begin);
  }

  int grow(std::size_t begin, std::size_t end, int depth) {
    const int id = static_cast<int>(tree_.nodes_.size());
    tree_.nodes_.emplace_back();
    tree_.nodes_.back().value = leaf_value(begin, end);
    const std::size_t count = end - begin;
    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    if (count < 2 * min_leaf || (params_.max_depth > 0 && depth >= params_.max_depth) || X_.cols() == 0)
      return id;

    double total_w = 0.0, total_wy = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      total_w += w_[rows_[k]];
      total_wy += w_[rows_[k]] * y_[rows_[k]];
    }
    if (total_w <= 0.0) return id;
    const double parent_score = total_wy * total_wy / total_w;

    // Partial Fisher-Yates draws mtry distinct candidate features.
    for (int k = 0; k < mtry_; ++k) {
      const auto j = k + static_cast<int>(rng_.below(static_cast<std::uint64_t>(features_.size() - static_cast<std::size_t>(k))));
      std::swap(features_[static_cast<std::size_t>(k)], features_[static_cast<std::size_t>(j)]);
    }

    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    scratch_.assign(rows_.begin() + static_cast<std::ptrdiff_t>(begin), rows_.begin() + static_cast<std::ptrdiff_t>(end));
    for (int k = 0; k < mtry_; ++k) {
      const int f = features_[static_cast<std::size_t>(k)];
      std::sort(scratch_.begin(), scratch_.end(),
                [&](Eigen::Index a, Eigen::Index b) { return X_(a, f) < X_(b, f); });
      double lw = 0.0, lwy = 0.0;
      for (std::size_t m = 0; m + 1 < count; ++m) {
        const Eigen::Index r = scratch_[m];
        lw += w_[r];
        lwy += w_[r] * y_[r];
        const std::size_t left_n = m + 1;
        if (left_n < min_leaf || count - left_n < min_leaf) continue;
        const double xv = X_(r, f), xn = X_(scratch_[m + 1], f);
        if (!(xv < xn)) continue;
        const double rw = total_w - lw;
        if (lw <= 0.0 || rw <= 0.0) continue;
        const double rwy = total_wy - lwy;
        const double gain = lwy * lwy / lw + rwy * rwy / rw - parent_score;
        if (gain > best_gain * (1.0 + 1e-12) + 1e-14 * std::abs(parent_score)) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (xv + xn);
          if (!(best_threshold < xn)) best_threshold = xv;
        }
      }
    }
    if (best_feature < 0) return id;

    auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                              rows_.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](Eigen::Index r) { return X_(r, best_feature) <= best_threshold; });
    const auto split = static_cast<std::size_t>(mid - rows_.begin());
    tree_.nodes_[static_cast<std::size_t>(id)].feature = best_feature;
    tree_.nodes_[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int left = grow(begin, split, depth + 1);
    const int right = grow(split, end, depth + 1);
    tree_.nodes_[static_cast<std::size_t>(id)].left = left;
    tree_.nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  const Eigen::VectorXd& w_;
  const ForestParams& params_;
  Rng& rng_;
  int mtry_ = 1;
  std::vector<int> features_;
  std::vector<Eigen::Index> rows_;
  std::vector<Eigen::Index> scratch_;
  RegressionTree tree_;
};

double Forest::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double s = 0.0;
  for (const auto& t : trees_) s += t.predict_row(x);
  return s / static_cast<double>(trees_.size());
}

Eigen::VectorXd Forest::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = predict_row(X.row(i));
  return out;
}

Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                  Rng& rng, const Eigen::VectorXd* weights) {
  params.validate();
  const Eigen::Index n = X.rows();
  if (y.size() != n) throw EstimationError("forest: X and y differ in length");
  if (n < params.min_leaf)
    throw EstimationError("forest: " + std::to_string(n) + " rows is fewer than min_leaf " +
                          std::to_string(params.min_leaf));
  if (!X.allFinite() || !y.allFinite()) throw DataError("forest: non-finite input");
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  if (w.size() != n || (w.array() < 0.0).any()) throw EstimationError("forest: invalid weights");

  Forest forest;
  forest.trees_.reserve(static_cast<std::size_t>(params.trees));
  TreeBuilder builder(X, y, w, params, rng);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (int t = 0; t < params.trees; ++t) {
    if (params.bootstrap) {
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    forest.trees_.push_back(builder.build(rows));
  }
  return forest;
}

}  // namespace hetfx
