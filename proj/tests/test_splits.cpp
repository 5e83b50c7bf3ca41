#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/splits.hpp"
#include "helpers.hpp"

using namespace hetfx;

namespace {

Dataset stratified(std::size_t n, bool clustered, std::uint64_t seed) {
  Rng rng(seed);
  DatasetColumns c;
  const auto N = static_cast<Eigen::Index>(n);
  c.y.resize(N);
  c.d.resize(N);
  c.p = Eigen::VectorXd::Constant(N, 0.5);
  c.strata = std::vector<std::int64_t>(n);
  if (clustered) c.cluster = std::vector<std::int64_t>(n);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    (*c.strata)[k] = static_cast<std::int64_t>(k % 3);
    if (clustered) {
      // clusters of 4 rows inside a stratum, all with one arm
      const std::int64_t cl = static_cast<std::int64_t>(k / 12) * 3 + (*c.strata)[k];
      (*c.cluster)[k] = cl;
      c.d[i] = cl % 2 == 0 ? 1.0 : 0.0;
    } else {
      c.d[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    }
    c.y[i] = rng.normal();
  }
  c.strata_labels = {"s0", "s1", "s2"};
  return Dataset::from_columns(std::move(c));
}

}  // namespace

TEST(Splits, PartitionEveryRowOnce) {
  const Dataset ds = test::small_experiment(101, 1);
  const Split s = make_split(ds, 9, 0);
  std::vector<std::size_t> all = s.aux;
  all.insert(all.end(), s.main.begin(), s.main.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, test::iota_rows(101));
  EXPECT_TRUE(std::is_sorted(s.aux.begin(), s.aux.end()));
  EXPECT_TRUE(std::is_sorted(s.main.begin(), s.main.end()));
  EXPECT_LE(std::max(s.aux.size(), s.main.size()) - std::min(s.aux.size(), s.main.size()), 1u);
}

TEST(Splits, DeterministicAndIndexedIndependently) {
  const Dataset ds = test::small_experiment(80, 2);
  const SplitPlan plan = make_splits(ds, 5, 123);
  for (std::size_t k = 0; k < 5; ++k) {
    const Split again = make_split(ds, 123, k);
    EXPECT_EQ(plan.splits[k].aux, again.aux);
  }
  EXPECT_NE(plan.splits[0].aux, plan.splits[1].aux);
  EXPECT_NE(make_split(ds, 124, 0).aux, plan.splits[0].aux);
}

TEST(Splits, BalancesArmsWithinStrata) {
  const Dataset ds = stratified(600, false, 4);
  for (std::size_t k = 0; k < 20; ++k) {
    const Split s = make_split(ds, 77, k);
    std::map<std::pair<std::int64_t, int>, std::pair<int, int>> counts;
    for (std::size_t r : s.aux) ++counts[{(*ds.strata())[r], static_cast<int>(ds.d()[static_cast<Eigen::Index>(r)])}].first;
    for (std::size_t r : s.main) ++counts[{(*ds.strata())[r], static_cast<int>(ds.d()[static_cast<Eigen::Index>(r)])}].second;
    for (const auto& [cell, c] : counts) EXPECT_LE(std::abs(c.first - c.second), 1);
  }
}

TEST(Splits, ClustersStayTogether) {
  const Dataset ds = stratified(240, true, 5);
  const Split s = make_split(ds, 3, 7);
  std::set<std::int64_t> aux_clusters, main_clusters;
  for (std::size_t r : s.aux) aux_clusters.insert((*ds.cluster())[r]);
  for (std::size_t r : s.main) main_clusters.insert((*ds.cluster())[r]);
  for (auto c : aux_clusters) EXPECT_FALSE(main_clusters.count(c));
  EXPECT_EQ(aux_clusters.size() + main_clusters.size(), 60u);
}

TEST(Splits, AuxFraction) {
  const Dataset ds = test::small_experiment(200, 6);
  const Split s = make_split(ds, 1, 0, {0.25});
  EXPECT_NEAR(static_cast<double>(s.aux.size()), 50.0, 1.0);
  EXPECT_THROW(make_split(ds, 1, 0, {1.0}), ConfigError);
  EXPECT_THROW(make_splits(ds, 0, 1), ConfigError);
}

TEST(Splits, TinyStratumNamesTheStratum) {
  DatasetColumns c;
  c.y = Eigen::VectorXd::Zero(10);
  c.d = Eigen::VectorXd(10);
  c.d << 1, 0, 1, 0, 1, 0, 1, 0, 1, 1;
  c.p = Eigen::VectorXd::Constant(10, 0.5);
  c.strata = std::vector<std::int64_t>{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  c.strata_labels = {"big", "lonely"};
  const Dataset ds = Dataset::from_columns(std::move(c));
  try {
    make_split(ds, 1, 0);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}
