#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hetfx/dataset.hpp"
#include "hetfx/rng.hpp"

namespace hetfx::test {

// Randomized experiment with Y = z0 + d * (1 + z0) + noise and constant p.
inline Dataset small_experiment(std::size_t n, std::uint64_t seed, int covariates = 2, double p = 0.5) {
  Rng rng(seed);
  DatasetColumns c;
  const auto N = static_cast<Eigen::Index>(n);
  c.y.resize(N);
  c.d.resize(N);
  c.p = Eigen::VectorXd::Constant(N, p);
  c.z.resize(N, covariates);
  for (int j = 0; j < covariates; ++j) c.covariate_names.push_back("z" + std::to_string(j));
  for (Eigen::Index i = 0; i < N; ++i) {
    for (int j = 0; j < covariates; ++j) c.z(i, j) = rng.normal();
    c.d[i] = i % 2 == 0 ? 1.0 : 0.0;
    c.y[i] = c.z(i, 0) + c.d[i] * (1.0 + c.z(i, 0)) + rng.normal();
  }
  return Dataset::from_columns(std::move(c));
}

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

}  // namespace hetfx::test
