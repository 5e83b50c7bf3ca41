#include "hetfx/sim.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "hetfx/error.hpp"
#include "hetfx/estimators.hpp"
#include "hetfx/pipeline.hpp"
#include "hetfx/report.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/stats.hpp"
#include "hetfx/wls.hpp"

namespace hetfx {

SimDesign SimDesign::interactive_design(std::size_t n, double beta, std::uint64_t seed, double alpha2) {
  SimDesign d;
  d.n = n;
  d.beta = beta;
  d.alpha2 = alpha2;
  d.seed = seed;
  return d;
}

SimDesign SimDesign::figure(bool heterogeneous, std::size_t n, std::uint64_t seed) {
  SimDesign d;
  d.kind = heterogeneous ? Kind::figure_linear : Kind::figure_null;
  d.z_dist = ZDist::uniform;
  d.n = n;
  d.seed = seed;
  return d;
}

double SimDesign::baseline(double z) const {
  switch (kind) {
    case Kind::interactive: return alpha0 + alpha1 * z;
    case Kind::figure_null:
    case Kind::figure_linear: return 0.0;
    case Kind::custom: return b0 ? b0(z) : 0.0;
  }
  return 0.0;
}

double SimDesign::effect(double z) const {
  switch (kind) {
    case Kind::interactive: return alpha2 + beta * z;
    case Kind::figure_null: return 0.0;
    case Kind::figure_linear: return z;
    case Kind::custom: return s0 ? s0(z) : 0.0;
  }
  return 0.0;
}

double SimDesign::draw_z(Rng& rng) const {
  return z_dist == ZDist::uniform ? 2.0 * rng.uniform() - 1.0 : rng.normal();
}

void SimDesign::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("simulation: sigma must be positive");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("simulation: p must lie in (0,1)");
  if (n < 4) throw ConfigError("simulation: n must be at least 4");
}

SimData gen_design(const SimDesign& design) {
  design.validate();
  Rng rng(derive_seed(design.seed, {static_cast<std::uint64_t>(Stream::simulation)}));
  const auto n = static_cast<Eigen::Index>(design.n);
  DatasetColumns c;
  c.y.resize(n);
  c.d.resize(n);
  c.p.resize(n);
  c.z.resize(n, 1);
  c.covariate_names = {"Z"};
  Eigen::VectorXd b0(n), s0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = design.draw_z(rng);
    const double p = design.propensity ? design.propensity(z) : design.p;
    const double d = rng.bernoulli(p) ? 1.0 : 0.0;
    b0[i] = design.baseline(z);
    s0[i] = design.effect(z);
    c.z(i, 0) = z;
    c.p[i] = p;
    c.d[i] = d;
    c.y[i] = b0[i] + d * s0[i] + design.sigma * rng.normal();
  }
  return {Dataset::from_columns(std::move(c)), std::move(b0), std::move(s0)};
}

void write_sim_csv(const SimData& sim, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  const Dataset& ds = sim.data;
  out << "Y,D,p,Z\n";
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << format_number(ds.y()[k]) << ',' << format_number(ds.d()[k]) << ',' << format_number(ds.p()[k]) << ','
        << format_number(ds.z()(k, 0)) << '\n';
  }
  if (!out) throw ConfigError("cannot write " + path);
}

double standard_het_test(const Dataset& ds) {
  if (ds.z().cols() < 1) throw ConfigError("standard test needs a covariate");
  const auto n = static_cast<Eigen::Index>(ds.n());
  Eigen::MatrixXd X(n, 4);
  X.col(0).setOnes();
  X.col(1) = ds.z().col(0);
  X.col(2) = ds.d();
  X.col(3) = ds.z().col(0).cwiseProduct(ds.d());
  const WlsFit fit = fit_weighted_ols(X, ds.y(), Eigen::VectorXd::Ones(n));
  if (fit.dropped(3)) throw EstimationError("standard test: interaction is collinear");
  const double se = fit.se(3);
  if (!(se > 0.0)) throw EstimationError("standard test: zero standard error");
  return 2.0 * normal_cdf(-std::abs(fit.coef[3] / se));
}

double PowerCell::mc_se() const {
  const double r = rate();
  return reps ? std::sqrt(r * (1.0 - r) / static_cast<double>(reps)) : 0.0;
}

const PowerCell& PowerTable::at(std::size_t n, double beta) const {
  for (const auto& c : cells)
    if (c.n == n && c.beta == beta) return c;
  throw ConfigError("power table has no cell for the requested (n, beta)");
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& f) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!err) err = std::current_exception();
        next.store(count);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

namespace {

std::uint64_t beta_key(double beta) { return static_cast<std::uint64_t>(std::llround(beta * 1e6) + (1LL << 40)); }

template <typename Test>
PowerTable run_power(const PowerOptions& opt, const std::string& method, Test&& reject) {
  PowerTable table;
  table.method = method;
  for (std::size_t n : opt.ns)
    for (double beta : opt.betas) {
      std::vector<char> rejected(opt.reps, 0);
      parallel_for(opt.reps, opt.threads, [&](std::size_t rep) {
        const std::uint64_t seed = derive_seed(opt.seed, {static_cast<std::uint64_t>(n), beta_key(beta),
                                                          static_cast<std::uint64_t>(rep)});
        const SimData sim = gen_design(SimDesign::interactive_design(n, beta, seed, opt.alpha2));
        rejected[rep] = reject(sim.data, seed) ? 1 : 0;
      });
      PowerCell cell;
      cell.n = n;
      cell.beta = beta;
      cell.reps = opt.reps;
      for (char r : rejected) cell.rejections += static_cast<std::size_t>(r);
      table.cells.push_back(cell);
    }
  return table;
}

}  // namespace

PowerTable standard_power(const PowerOptions& opt) {
  return run_power(opt, "standard", [&](const Dataset& ds, std::uint64_t) { return standard_het_test(ds) <= opt.alpha; });
}

double proposed_het_pvalue(const Dataset& ds, std::size_t splits, double alpha, std::uint64_t seed) {
  RunConfig cfg;
  cfg.learners = {LearnerSpec::parse("elastic_net[lambda=0]")};
  cfg.splits = splits;
  cfg.alpha = alpha;
  cfg.strategy = StrategyChoice::weighted;
  cfg.run_gates = false;
  cfg.threads = 1;
  cfg.seed = seed;
  return run_analysis(ds, cfg).primary().beta2.p_adjusted;
}

PowerTable proposed_power(const PowerOptions& opt) {
  return run_power(opt, "proposed", [&](const Dataset& ds, std::uint64_t seed) {
    return proposed_het_pvalue(ds, opt.splits, opt.alpha, seed) <= opt.alpha;
  });
}

std::string power_csv(const PowerTable& table) {
  std::ostringstream os;
  os << "method,n,beta,reps,rejections,rate,mc_se\n";
  for (const auto& c : table.cells)
    os << table.method << ',' << c.n << ',' << format_number(c.beta) << ',' << c.reps << ',' << c.rejections << ','
       << format_number(c.rate()) << ',' << format_number(c.mc_se()) << '\n';
  return os.str();
}

Eigen::VectorXd oracle_gates(const SimDesign& design, const std::function<double(double)>& S, int K,
                             std::size_t mc_n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(Stream::simulation), 99}));
  const auto n = static_cast<Eigen::Index>(mc_n);
  Eigen::VectorXd s(n), truth(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = design.draw_z(rng);
    s[i] = S(z);
    truth[i] = design.effect(z);
  }
  const GroupScheme g = make_groups(s, K, K == 1);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(K);
  for (Eigen::Index i = 0; i < n; ++i) sum[g.membership[static_cast<std::size_t>(i)]] += truth[i];
  for (int k = 0; k < K; ++k) sum[k] /= static_cast<double>(g.sizes[static_cast<std::size_t>(k)]);
  return sum;
}

}  // namespace hetfx
