#pragma once

#include <span>

#include <Eigen/Dense>

namespace hetfx {

double normal_cdf(double x);
double normal_quantile(double p);
// Upper tail P(X > x) for a chi-square with `df` degrees of freedom.
double chi_squared_sf(double x, double df);

double mean(std::span<const double> xs);
// Population variance (divisor n); zero for a singleton.
double variance(std::span<const double> xs);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace hetfx
