#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace hetfx {

struct PropensityBounds {
  double lo = 0.02;
  double hi = 0.98;
};

// Raw column inputs for Dataset::from_columns. Strata and cluster are
// integer ids; labels (when present) are used in error messages.
struct DatasetColumns {
  std::string outcome_name = "Y";
  Eigen::VectorXd y;
  Eigen::VectorXd d;
  Eigen::VectorXd p;
  Eigen::MatrixXd z;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd controls;
  std::vector<std::string> control_names;
  std::optional<std::vector<std::int64_t>> strata;
  std::vector<std::string> strata_labels;
  std::optional<std::vector<std::int64_t>> cluster;
  std::optional<Eigen::VectorXd> sweight;
};

// Immutable column store for one experiment. The weight w = 1/(p(1-p)) and
// the Horvitz-Thompson transform h = (d-p) w are computed once at
// construction and never change.
class Dataset {
 public:
  static Dataset from_columns(DatasetColumns cols, PropensityBounds bounds = {});

  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  const std::string& outcome_name() const { return outcome_name_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& d() const { return d_; }
  const Eigen::VectorXd& p() const { return p_; }
  const Eigen::VectorXd& w() const { return w_; }
  const Eigen::VectorXd& h() const { return h_; }
  const Eigen::MatrixXd& z() const { return z_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const Eigen::MatrixXd& controls() const { return controls_; }
  const std::vector<std::string>& control_names() const { return control_names_; }
  const std::optional<std::vector<std::int64_t>>& strata() const { return strata_; }
  const std::optional<std::vector<std::int64_t>>& cluster() const { return cluster_; }
  const Eigen::VectorXd& sweight() const { return sweight_; }
  std::string stratum_label(std::int64_t id) const;
  const PropensityBounds& bounds() const { return bounds_; }

  // Looks up a named column among outcome, covariates, and controls.
  std::optional<Eigen::VectorXd> column(const std::string& name) const;

  // Content hash over every stored column.
  std::uint64_t hash() const;

 private:
  Dataset() = default;

  std::string outcome_name_;
  Eigen::VectorXd y_, d_, p_, w_, h_, sweight_;
  Eigen::MatrixXd z_, controls_;
  std::vector<std::string> covariate_names_, control_names_, strata_labels_;
  std::optional<std::vector<std::int64_t>> strata_, cluster_;
  PropensityBounds bounds_;
};

// Exact transforms used by Dataset; exposed so callers can recompute them.
inline double propensity_weight(double p) { return 1.0 / (p * (1.0 - p)); }
inline double ht_transform(double d, double p) { return (d - p) * propensity_weight(p); }

// Column-role mapping for CSV ingestion.
struct DatasetSchema {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
  // Subset of covariates / fixed effects read as categorical labels and
  // expanded to indicators with the first (sorted) level dropped.
  std::vector<std::string> categorical;
  std::vector<std::string> controls;       // numeric extra regressors for BLP/GATES
  std::vector<std::string> fixed_effects;  // categorical extra regressors
  std::optional<std::string> strata;
  std::optional<std::string> cluster;
  std::optional<std::string> weights;
};

// Either a constant propensity or the name of a column holding p(Z).
using PropensitySpec = std::variant<double, std::string>;

Dataset load_dataset(const std::string& path, const DatasetSchema& schema,
                     const PropensitySpec& propensity, PropensityBounds bounds = {});

struct CsvTable;
Dataset dataset_from_table(const CsvTable& table, const DatasetSchema& schema,
                           const PropensitySpec& propensity, PropensityBounds bounds = {});

std::uint64_t fnv1a64(const void* data, std::size_t bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace hetfx
