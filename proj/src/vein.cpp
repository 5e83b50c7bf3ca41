#include "hetfx/vein.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hetfx/error.hpp"
#include "hetfx/stats.hpp"

namespace hetfx {

namespace {

std::vector<double> sorted_copy(std::span<const double> xs) {
  if (xs.empty()) throw EstimationError("median of an empty set");
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return v;
}

std::size_t half_up(std::size_t n) { return (n + 1) / 2; }

}  // namespace

MedianTriple medians(std::span<const double> xs) {
  const auto v = sorted_copy(xs);
  const std::size_t n = v.size();
  MedianTriple m;
  m.lower = v[half_up(n) - 1];
  m.upper = v[n - half_up(n)];
  m.mid = 0.5 * (m.lower + m.upper);
  return m;
}

double lower_median(std::span<const double> xs) { return medians(xs).lower; }
double upper_median(std::span<const double> xs) { return medians(xs).upper; }

double split_pvalue(double theta, double sigma, Sidedness side, double null) {
  const double diff = theta - null;
  if (!(sigma > 0.0)) {
    switch (side) {
      case Sidedness::right: return diff > 0.0 ? 0.0 : 1.0;
      case Sidedness::left: return diff < 0.0 ? 0.0 : 1.0;
      case Sidedness::two_sided: return diff != 0.0 ? 0.0 : 1.0;
    }
  }
  const double t = diff / sigma;
  switch (side) {
    case Sidedness::right: return normal_cdf(-t);
    case Sidedness::left: return normal_cdf(t);
    case Sidedness::two_sided: break;
  }
  return std::min(1.0, 2.0 * normal_cdf(-std::abs(t)));
}

AdjustedPvalue adjusted_pvalue(std::span<const double> ps) {
  for (double p : ps)
    if (!(p >= 0.0 && p <= 1.0)) throw EstimationError("p-value outside [0,1]");
  AdjustedPvalue out;
  out.raw = 2.0 * lower_median(ps);
  out.capped = std::min(1.0, out.raw);
  return out;
}

Interval adjusted_ci(std::span<const double> lo, std::span<const double> hi) {
  if (lo.size() != hi.size()) throw EstimationError("adjusted_ci: bound vectors differ in length");
  return {upper_median(lo), lower_median(hi)};
}

Interval ci_by_inversion(std::span<const double> thetas, std::span<const double> sigmas, double alpha) {
  if (thetas.size() != sigmas.size()) throw EstimationError("ci_by_inversion: length mismatch");
  if (thetas.empty()) throw EstimationError("ci_by_inversion: no splits");
  if (!(alpha > 0.0 && alpha < 0.25)) throw ConfigError("ci_by_inversion needs 0 < alpha < 0.25");
  for (double s : sigmas)
    if (!(s > 0.0)) throw EstimationError("ci_by_inversion: standard error must be positive");

  const double z = normal_quantile(1.0 - alpha / 2.0);
  const std::size_t n = thetas.size();
  std::vector<double> L(n), U(n), t(n);
  for (std::size_t a = 0; a < n; ++a) {
    L[a] = thetas[a] - z * sigmas[a];
    U[a] = thetas[a] + z * sigmas[a];
  }
  const Interval lu = adjusted_ci(L, U);
  const double min_l = *std::min_element(L.begin(), L.end());
  const double max_u = *std::max_element(U.begin(), U.end());
  const double range = max_u - min_l;
  const double tol = 1e-10 * (lu.hi > lu.lo ? lu.hi - lu.lo : range);

  // Accept the lower endpoint side: fewer than half of the splits reject
  // theta in favour of larger values.
  auto above_lower = [&](double theta) {
    for (std::size_t a = 0; a < n; ++a) t[a] = (thetas[a] - theta) / sigmas[a] - z;
    return upper_median(t) < 0.0;
  };
  auto below_upper = [&](double theta) {
    for (std::size_t a = 0; a < n; ++a) t[a] = (theta - thetas[a]) / sigmas[a] - z;
    return upper_median(t) < 0.0;
  };
  // Bisects between a failing point `out` and a satisfying point `in`,
  // returning the satisfying end.
  auto bisect = [&](double out, double in, const std::function<bool(double)>& ok) {
    for (int it = 0; it < 400 && std::abs(in - out) > tol; ++it) {
      const double m = 0.5 * (out + in);
      (ok(m) ? in : out) = m;
    }
    return in;
  };
  const double far_lo = min_l - range, far_hi = max_u + range;
  Interval ci{bisect(far_lo, far_hi, above_lower), bisect(far_hi, far_lo, below_upper)};
  ci.lo = std::max(ci.lo, lu.lo);
  ci.hi = std::min(ci.hi, lu.hi);
  return ci;
}

VeinSummary summarize(std::span<const double> thetas, std::span<const double> sigmas, double alpha,
                      Sidedness side, double null) {
  if (thetas.size() != sigmas.size()) throw EstimationError("summarize: length mismatch");
  if (thetas.empty()) throw EstimationError("summarize: no splits");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const std::size_t n = thetas.size();
  std::vector<double> L(n), U(n), p(n);
  bool positive = true;
  for (std::size_t a = 0; a < n; ++a) {
    const double s = std::max(sigmas[a], 0.0);
    positive = positive && s > 0.0;
    L[a] = thetas[a] - z * s;
    U[a] = thetas[a] + z * s;
    p[a] = split_pvalue(thetas[a], s, side, null);
  }
  VeinSummary out;
  out.alpha = alpha;
  out.splits = n;
  out.estimate = medians(thetas);
  out.point = out.estimate.mid;
  out.ci_lu = adjusted_ci(L, U);
  if (positive) out.ci_inversion = ci_by_inversion(thetas, sigmas, alpha);
  const AdjustedPvalue ap = adjusted_pvalue(p);
  out.p_adjusted = ap.capped;
  out.p_raw = ap.raw;
  return out;
}

}  // namespace hetfx
