#pragma once

#include <vector>

#include <Eigen/Dense>

namespace hetfx {

class Rng;

struct ForestParams {
  int trees = 500;
  int min_leaf = 5;
  // Share of features drawn as split candidates at each node.
  double feature_fraction = 1.0 / 3.0;
  bool bootstrap = true;
  int max_depth = 0;  // 0 = unlimited

  void validate() const;
};

// One CART regression tree stored as a flat node array.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class TreeBuilder;
  std::vector<Node> nodes_;
};

class Forest {
 public:
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
  std::size_t tree_count() const { return trees_.size(); }

 private:
  friend Forest fit_forest(const Eigen::MatrixXd&, const Eigen::VectorXd&, const ForestParams&,
                           Rng&, const Eigen::VectorXd*);
  std::vector<RegressionTree> trees_;
};

// Bootstrap-bagged regression trees grown by weighted variance reduction with
// per-node feature subsampling. A split is admissible only if both children
// keep at least min_leaf rows. Optional nonnegative row weights enter both
// the split criterion and the leaf means.
Forest fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                  Rng& rng, const Eigen::VectorXd* weights = nullptr);

}  // namespace hetfx
