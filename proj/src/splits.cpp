#include "hetfx/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"

namespace hetfx {

namespace {

struct Unit {
  std::vector<std::size_t> rows;
};

// (stratum, arm) -> units. std::map gives a fixed cell order.
using Cells = std::map<std::pair<std::int64_t, int>, std::vector<Unit>>;

Cells build_cells(const Dataset& ds) {
  const std::size_t n = ds.n();
  const auto& strata = ds.strata();
  auto stratum_of = [&](std::size_t i) -> std::int64_t { return strata ? (*strata)[i] : 0; };

  std::vector<Unit> units;
  std::vector<std::int64_t> unit_stratum;
  if (ds.cluster()) {
    std::map<std::int64_t, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = slot.emplace((*ds.cluster())[i], units.size());
      if (inserted) {
        units.emplace_back();
        unit_stratum.push_back(stratum_of(i));
      }
      units[it->second].rows.push_back(i);
    }
  } else {
    units.resize(n);
    unit_stratum.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      units[i].rows = {i};
      unit_stratum[i] = stratum_of(i);
    }
  }

  Cells cells;
  for (std::size_t u = 0; u < units.size(); ++u) {
    double treated = 0.0;
    for (std::size_t r : units[u].rows) treated += ds.d()[static_cast<Eigen::Index>(r)];
    const int arm = 2.0 * treated >= static_cast<double>(units[u].rows.size()) ? 1 : 0;
    cells[{unit_stratum[u], arm}].push_back(std::move(units[u]));
  }

  std::map<std::int64_t, std::pair<std::size_t, std::size_t>> arm_counts;
  for (const auto& [key, members] : cells) {
    auto& c = arm_counts[key.first];
    (key.second == 1 ? c.first : c.second) += members.size();
  }
  for (const auto& [stratum, counts] : arm_counts) {
    if (counts.first < 2 || counts.second < 2) {
      const std::string label = strata ? "stratum '" + ds.stratum_label(stratum) + "'" : "the sample";
      throw DataError(label + " has " + std::to_string(counts.first) + " treated and " +
                      std::to_string(counts.second) +
                      " control units; at least 2 of each are needed to balance splits");
    }
  }
  return cells;
}

Split draw(const Cells& cells, std::uint64_t seed, std::size_t index, double fraction) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(Stream::split)}));
  Split split;
  double rows_aux = 0.0, rows_main = 0.0;
  for (const auto& [key, members] : cells) {
    std::vector<std::size_t> order(members.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    rng.shuffle(std::span<std::size_t>(order));
    const double target = fraction * static_cast<double>(members.size());
    auto take = static_cast<std::size_t>(std::floor(target));
    if (target - static_cast<double>(take) > 1e-12) {
      // The fractional unit goes to whichever side is behind its share.
      if (rows_aux * (1.0 - fraction) <= rows_main * fraction) ++take;
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& rows = members[order[k]].rows;
      auto& side = k < take ? split.aux : split.main;
      side.insert(side.end(), rows.begin(), rows.end());
      (k < take ? rows_aux : rows_main) += static_cast<double>(rows.size());
    }
  }
  std::sort(split.aux.begin(), split.aux.end());
  std::sort(split.main.begin(), split.main.end());
  return split;
}

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) throw ConfigError("aux_fraction must lie in (0,1)");
}

}  // namespace

Split make_split(const Dataset& ds, std::uint64_t seed, std::size_t index,
                 const SplitOptions& options) {
  check_fraction(options.aux_fraction);
  return draw(build_cells(ds), seed, index, options.aux_fraction);
}

SplitPlan make_splits(const Dataset& ds, std::size_t count, std::uint64_t seed,
                      const SplitOptions& options) {
  if (count < 1) throw ConfigError("split count must be at least 1");
  check_fraction(options.aux_fraction);
  const Cells cells = build_cells(ds);
  SplitPlan plan;
  plan.seed = seed;
  plan.splits.reserve(count);
  for (std::size_t s = 0; s < count; ++s) plan.splits.push_back(draw(cells, seed, s, options.aux_fraction));
  return plan;
}

}  // namespace hetfx
