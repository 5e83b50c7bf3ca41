#pragma once

#include <cstdint>
#include <vector>

#include "hetfx/dataset.hpp"

namespace hetfx {

// One partition of the rows into an auxiliary half (proxy training) and a
// main half (estimation). Both index lists are sorted ascending.
struct Split {
  std::vector<std::size_t> aux;
  std::vector<std::size_t> main;
};

struct SplitPlan {
  std::vector<Split> splits;
  std::uint64_t seed = 0;
  std::size_t count() const { return splits.size(); }
};

struct SplitOptions {
  // Share of splitting units sent to the auxiliary sample.
  double aux_fraction = 0.5;
};

// Draws split `index` of the plan keyed by `seed`. Units (rows, or whole
// clusters when the dataset is clustered) are shuffled within each
// (stratum, treatment arm) cell and divided per aux_fraction, so each side
// keeps the stratum's treated share up to one unit. A dataset without strata
// is treated as a single stratum. Clusters are assigned to the arm of the
// majority of their rows.
Split make_split(const Dataset& ds, std::uint64_t seed, std::size_t index,
                 const SplitOptions& options = {});

SplitPlan make_splits(const Dataset& ds, std::size_t count, std::uint64_t seed,
                      const SplitOptions& options = {});

}  // namespace hetfx
