#include "hetfx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hetfx/csv.hpp"
#include "hetfx/error.hpp"

namespace hetfx {

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Dataset Dataset::from_columns(DatasetColumns cols, PropensityBounds bounds) {
  const auto n = cols.y.size();
  if (n == 0) throw DataError("dataset has no rows");
  if (cols.d.size() != n || cols.p.size() != n)
    throw DataError("outcome, treatment and propensity columns differ in length");
  if (!(bounds.lo > 0.0 && bounds.hi < 1.0 && bounds.lo <= bounds.hi))
    throw ConfigError("propensity bounds must satisfy 0 < lo <= hi < 1");
  if (cols.z.rows() != n) {
    if (cols.z.size() == 0) cols.z.resize(n, 0);
    else throw DataError("covariate matrix has wrong row count");
  }
  if (static_cast<std::size_t>(cols.z.cols()) != cols.covariate_names.size()) {
    if (!cols.covariate_names.empty()) throw DataError("covariate names do not match matrix");
    for (Eigen::Index j = 0; j < cols.z.cols(); ++j)
      cols.covariate_names.push_back("z" + std::to_string(j + 1));
  }
  if (cols.controls.rows() != n) {
    if (cols.controls.size() == 0) cols.controls.resize(n, 0);
    else throw DataError("control matrix has wrong row count");
  }
  if (static_cast<std::size_t>(cols.controls.cols()) != cols.control_names.size()) {
    if (!cols.control_names.empty()) throw DataError("control names do not match matrix");
    for (Eigen::Index j = 0; j < cols.controls.cols(); ++j)
      cols.control_names.push_back("control" + std::to_string(j + 1));
  }

  std::size_t treated = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(cols.y[i])) throw DataError("outcome is not finite at row " + std::to_string(i));
    if (cols.d[i] != 0.0 && cols.d[i] != 1.0)
      throw DataError("treatment is not binary at row " + std::to_string(i));
    treated += cols.d[i] == 1.0;
    const double p = cols.p[i];
    if (!(p >= bounds.lo && p <= bounds.hi))
      throw DataError("propensity " + std::to_string(p) + " at row " + std::to_string(i) +
                      " outside [" + std::to_string(bounds.lo) + ", " +
                      std::to_string(bounds.hi) + "]");
  }
  if (treated == 0 || treated == static_cast<std::size_t>(n))
    throw DataError("both treatment arms must be nonempty");
  if (!cols.z.allFinite() || !cols.controls.allFinite())
    throw DataError("covariates and controls must be finite");

  Dataset ds;
  if (cols.sweight) {
    if (cols.sweight->size() != n) throw DataError("sample weight column has wrong length");
    for (Eigen::Index i = 0; i < n; ++i)
      if (!std::isfinite((*cols.sweight)[i]) || (*cols.sweight)[i] < 0.0)
        throw DataError("sample weight must be finite and nonnegative at row " + std::to_string(i));
    ds.sweight_ = *cols.sweight;
  } else {
    ds.sweight_ = Eigen::VectorXd::Ones(n);
  }
  if (cols.strata && cols.strata->size() != static_cast<std::size_t>(n))
    throw DataError("strata column has wrong length");
  if (cols.cluster && cols.cluster->size() != static_cast<std::size_t>(n))
    throw DataError("cluster column has wrong length");
  if (cols.strata && cols.cluster) {
    std::map<std::int64_t, std::int64_t> home;
    for (std::size_t i = 0; i < cols.cluster->size(); ++i) {
      auto [it, inserted] = home.emplace((*cols.cluster)[i], (*cols.strata)[i]);
      if (!inserted && it->second != (*cols.strata)[i])
        throw DataError("cluster " + std::to_string((*cols.cluster)[i]) +
                        " spans more than one stratum");
    }
  }

  ds.outcome_name_ = std::move(cols.outcome_name);
  ds.y_ = std::move(cols.y);
  ds.d_ = std::move(cols.d);
  ds.p_ = std::move(cols.p);
  ds.w_.resize(n);
  ds.h_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.w_[i] = propensity_weight(ds.p_[i]);
    ds.h_[i] = ht_transform(ds.d_[i], ds.p_[i]);
  }
  ds.z_ = std::move(cols.z);
  ds.covariate_names_ = std::move(cols.covariate_names);
  ds.controls_ = std::move(cols.controls);
  ds.control_names_ = std::move(cols.control_names);
  ds.strata_ = std::move(cols.strata);
  ds.strata_labels_ = std::move(cols.strata_labels);
  ds.cluster_ = std::move(cols.cluster);
  ds.bounds_ = bounds;
  return ds;
}

std::string Dataset::stratum_label(std::int64_t id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < strata_labels_.size())
    return strata_labels_[static_cast<std::size_t>(id)];
  return std::to_string(id);
}

std::optional<Eigen::VectorXd> Dataset::column(const std::string& name) const {
  if (name == outcome_name_) return y_;
  for (std::size_t j = 0; j < covariate_names_.size(); ++j)
    if (covariate_names_[j] == name) return z_.col(static_cast<Eigen::Index>(j));
  for (std::size_t j = 0; j < control_names_.size(); ++j)
    if (control_names_[j] == name) return controls_.col(static_cast<Eigen::Index>(j));
  return std::nullopt;
}

std::uint64_t Dataset::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_vec = [&h](const Eigen::VectorXd& v) {
    h = fnv1a64(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
  };
  auto mix_mat = [&h](const Eigen::MatrixXd& m) {
    h = fnv1a64(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()), h);
  };
  mix_vec(y_);
  mix_vec(d_);
  mix_vec(p_);
  mix_vec(sweight_);
  mix_mat(z_);
  mix_mat(controls_);
  for (const auto* ids : {&strata_, &cluster_}) {
    if (*ids) h = fnv1a64((*ids)->data(), sizeof(std::int64_t) * (*ids)->size(), h);
    else h = fnv1a64("-", 1, h);
  }
  return h;
}

namespace {

std::vector<double> numeric_column(const CsvTable& t, std::size_t col) {
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    auto v = parse_number(t.rows[i][col]);
    if (!v)
      throw DataError("non-numeric cell '" + t.rows[i][col] + "' in column '" + t.header[col] +
                      "' at data row " + std::to_string(i + 1));
    out.push_back(*v);
  }
  return out;
}

std::size_t require_column(const CsvTable& t, const std::string& name) {
  auto idx = t.column_index(name);
  if (!idx) throw DataError("missing column '" + name + "'");
  return *idx;
}

// Sorted distinct levels; numeric order when every label parses as a number.
std::vector<std::string> sorted_levels(const CsvTable& t, std::size_t col) {
  std::set<std::string> uniq;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i][col].empty())
      throw DataError("empty cell in categorical column '" + t.header[col] + "' at data row " +
                      std::to_string(i + 1));
    uniq.insert(t.rows[i][col]);
  }
  std::vector<std::string> levels(uniq.begin(), uniq.end());
  bool numeric = std::all_of(levels.begin(), levels.end(),
                             [](const std::string& s) { return parse_number(s).has_value(); });
  if (numeric)
    std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  return levels;
}

struct Expanded {
  std::vector<std::vector<double>> columns;
  std::vector<std::string> names;
};

void append_indicators(const CsvTable& t, std::size_t col, Expanded& out) {
  const auto levels = sorted_levels(t, col);
  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < levels.size(); ++k) index[levels[k]] = k;
  for (std::size_t k = 1; k < levels.size(); ++k) {
    std::vector<double> ind(t.rows.size(), 0.0);
    for (std::size_t i = 0; i < t.rows.size(); ++i) ind[i] = index[t.rows[i][col]] == k ? 1.0 : 0.0;
    out.columns.push_back(std::move(ind));
    out.names.push_back(t.header[col] + "=" + levels[k]);
  }
}

Eigen::MatrixXd to_matrix(const Expanded& e, std::size_t n) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(e.columns.size()));
  for (std::size_t j = 0; j < e.columns.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e.columns[j][i];
  return m;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<std::int64_t> label_ids(const CsvTable& t, std::size_t col,
                                    std::vector<std::string>* labels_out) {
  const auto levels = sorted_levels(t, col);
  std::map<std::string, std::int64_t> index;
  for (std::size_t k = 0; k < levels.size(); ++k) index[levels[k]] = static_cast<std::int64_t>(k);
  std::vector<std::int64_t> ids(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) ids[i] = index[t.rows[i][col]];
  if (labels_out) *labels_out = levels;
  return ids;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

Dataset dataset_from_table(const CsvTable& table, const DatasetSchema& schema,
                           const PropensitySpec& propensity, PropensityBounds bounds) {
  const std::size_t n = table.rows.size();
  if (n == 0) throw DataError("csv has a header but no data rows");
  DatasetColumns cols;
  cols.outcome_name = schema.outcome;
  cols.y = to_vector(numeric_column(table, require_column(table, schema.outcome)));
  {
    const std::size_t dcol = require_column(table, schema.treatment);
    auto d = numeric_column(table, dcol);
    for (std::size_t i = 0; i < n; ++i)
      if (d[i] != 0.0 && d[i] != 1.0)
        throw DataError("treatment column '" + schema.treatment + "' is not binary at data row " +
                        std::to_string(i + 1));
    cols.d = to_vector(d);
  }
  if (const auto* c = std::get_if<double>(&propensity)) {
    if (!(*c > 0.0 && *c < 1.0)) throw DataError("constant propensity must lie in (0,1)");
    cols.p = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), *c);
  } else {
    cols.p = to_vector(numeric_column(table, require_column(table, std::get<std::string>(propensity))));
  }

  Expanded cov;
  for (const auto& name : schema.covariates) {
    const std::size_t col = require_column(table, name);
    if (contains(schema.categorical, name)) {
      append_indicators(table, col, cov);
    } else {
      cov.columns.push_back(numeric_column(table, col));
      cov.names.push_back(name);
    }
  }
  cols.z = to_matrix(cov, n);
  cols.covariate_names = cov.names;

  Expanded ctl;
  for (const auto& name : schema.controls) {
    ctl.columns.push_back(numeric_column(table, require_column(table, name)));
    ctl.names.push_back(name);
  }
  for (const auto& name : schema.fixed_effects) append_indicators(table, require_column(table, name), ctl);
  cols.controls = to_matrix(ctl, n);
  cols.control_names = ctl.names;

  if (schema.strata)
    cols.strata = label_ids(table, require_column(table, *schema.strata), &cols.strata_labels);
  if (schema.cluster) cols.cluster = label_ids(table, require_column(table, *schema.cluster), nullptr);
  if (schema.weights) cols.sweight = to_vector(numeric_column(table, require_column(table, *schema.weights)));
  return Dataset::from_columns(std::move(cols), bounds);
}

Dataset load_dataset(const std::string& path, const DatasetSchema& schema,
                     const PropensitySpec& propensity, PropensityBounds bounds) {
  return dataset_from_table(read_csv(path), schema, propensity, bounds);
}

}  // namespace hetfx
