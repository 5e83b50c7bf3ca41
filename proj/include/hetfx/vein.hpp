#pragma once

#include <optional>
#include <span>
#include <vector>

namespace hetfx {

// Lower, upper and mid medians of an empirical distribution. For sorted
// x_(1..n): lower = x_(ceil(n/2)), upper = x_(n + 1 - ceil(n/2)).
struct MedianTriple {
  double lower = 0.0;
  double upper = 0.0;
  double mid = 0.0;
};

MedianTriple medians(std::span<const double> xs);
double lower_median(std::span<const double> xs);
double upper_median(std::span<const double> xs);

enum class Sidedness { left, right, two_sided };

// Per-split p-value for theta = null from an estimate and its standard
// error. right: H1 theta > null; left: H1 theta < null; two_sided:
// 2(1 - Phi(|t|)). A zero sigma gives 0 (estimate off the null) or 1.
double split_pvalue(double theta, double sigma, Sidedness side, double null = 0.0);

struct AdjustedPvalue {
  double raw = 0.0;     // 2 * lower median
  double capped = 0.0;  // min(1, raw)
};

AdjustedPvalue adjusted_pvalue(std::span<const double> ps);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool empty() const { return lo > hi; }
  // An empty interval is a subset of everything.
  bool within(const Interval& outer) const {
    return empty() || (lo >= outer.lo && hi <= outer.hi);
  }
};

// [upper median of L, lower median of U].
Interval adjusted_ci(std::span<const double> lo, std::span<const double> hi);

// Set of theta for which both one-sided split-adjusted tests fail to reject
// at level alpha/2, i.e. upper-median((theta_A - theta)/sigma_A) < z and
// upper-median((theta - theta_A)/sigma_A) < z with z = Phi^-1(1 - alpha/2).
// Endpoints are found by bisection and clamped to adjusted_ci, so the result
// is always within it; it may be empty.
Interval ci_by_inversion(std::span<const double> thetas, std::span<const double> sigmas, double alpha);

struct VeinSummary {
  double point = 0.0;  // mid median of the split estimates
  MedianTriple estimate;
  Interval ci_lu;
  std::optional<Interval> ci_inversion;  // absent when some sigma is zero
  double p_adjusted = 1.0;
  double p_raw = 1.0;
  double alpha = 0.05;
  double level() const { return 1.0 - 2.0 * alpha; }
  std::size_t splits = 0;
};

// Per-split intervals are theta_A +- Phi^-1(1 - alpha/2) sigma_A.
VeinSummary summarize(std::span<const double> thetas, std::span<const double> sigmas, double alpha,
                      Sidedness side = Sidedness::two_sided, double null = 0.0);

}  // namespace hetfx
