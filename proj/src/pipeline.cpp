#include "hetfx/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "hetfx/error.hpp"
#include "hetfx/rng.hpp"
#include "hetfx/stats.hpp"

namespace hetfx {

std::string to_string(StrategyChoice s) {
  switch (s) {
    case StrategyChoice::weighted: return "weighted";
    case StrategyChoice::ht: return "ht";
    case StrategyChoice::both: return "both";
  }
  return "?";
}

StrategyChoice parse_strategy(const std::string& text) {
  if (text == "weighted") return StrategyChoice::weighted;
  if (text == "ht") return StrategyChoice::ht;
  if (text == "both") return StrategyChoice::both;
  throw ConfigError("unknown strategy '" + text + "' (weighted, ht, both)");
}

std::vector<Strategy> strategies_of(StrategyChoice s) {
  switch (s) {
    case StrategyChoice::weighted: return {Strategy::weighted};
    case StrategyChoice::ht: return {Strategy::ht};
    case StrategyChoice::both: return {Strategy::weighted, Strategy::ht};
  }
  return {};
}

void RunConfig::validate() const {
  if (splits < 1) throw ConfigError("need at least one split");
  if (!(alpha > 0.0 && alpha < 0.25)) throw ConfigError("alpha must lie in (0, 0.25)");
  if (groups < 1 || (groups < 2 && !allow_single_group))
    throw ConfigError("groups must be >= 2 (K=1 is a diagnostic mode)");
  if (learners.empty()) throw ConfigError("no learners configured");
  for (const auto& l : learners) l.validate();
  if (band_draws < 1) throw ConfigError("band draws must be positive");
  if (!(jitter_variance > 0.0)) throw ConfigError("jitter variance must be positive");
  if (!(split_options.aux_fraction > 0.0 && split_options.aux_fraction < 1.0))
    throw ConfigError("aux fraction must lie in (0,1)");
  if (threads < 0) throw ConfigError("threads must be >= 0");
}

std::string canonical_learner(const LearnerSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(spec.kind) << '|' << to_string(spec.target_mode) << '|'
     << (spec.tuning.kind == Tuning::Kind::cv ? "cv" : "fixed") << '|' << spec.tuning.folds << '|'
     << spec.tuning.repeats << '|' << spec.external_path;
  for (const auto& [k, v] : spec.hyperparams) os << '|' << k << '=' << v;
  return os.str();
}

LearnerChoice select_best_learners(const std::vector<std::vector<double>>& lambda,
                                   const std::vector<std::vector<double>>& lambda_bar) {
  auto pick = [](const std::vector<std::vector<double>>& scores, bool& tie) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    tie = false;
    for (std::size_t l = 0; l < scores.size(); ++l) {
      if (scores[l].empty()) continue;
      const double m = medians(scores[l]).mid;
      if (m > best_score) {
        best = l;
        best_score = m;
        tie = false;
      } else if (m == best_score) {
        tie = true;
      }
    }
    return best;
  };
  LearnerChoice c;
  c.blp = pick(lambda, c.blp_tie);
  c.gates = pick(lambda_bar, c.gates_tie);
  return c;
}

namespace {

double abs_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
  const double den = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  return den > 0.0 ? std::abs(ac.dot(bc)) / den : 0.0;
}

struct Context {
  const Dataset& ds;
  const RunConfig& cfg;
  std::vector<LearnerSpec> learners;
  std::vector<std::uint64_t> keys;
  std::vector<std::shared_ptr<const ProxyPair>> external;
  std::vector<Strategy> strategies;
  Eigen::MatrixXd candidates;
  std::vector<std::string> candidate_names;
};

LearnerSplit run_learner(const Context& ctx, std::size_t li, std::size_t split_index, const Split& sp,
                         std::string& stage) {
  const Dataset& ds = ctx.ds;
  const RunConfig& cfg = ctx.cfg;
  const auto idx = static_cast<std::uint64_t>(split_index);
  const std::uint64_t key = ctx.keys[li];

  stage = "proxies";
  std::shared_ptr<const ProxyPair> proxies = ctx.external[li];
  if (!proxies) {
    Rng rng(derive_seed(cfg.seed, {idx, key, static_cast<std::uint64_t>(Stream::learner)}));
    proxies = std::make_shared<const ProxyPair>(fit_proxies(ctx.learners[li], ds, sp.aux, rng));
  }
  ProxyValues vals = proxies->evaluate(ds, sp.main);
  {
    Rng jr(derive_seed(cfg.seed, {idx, key, static_cast<std::uint64_t>(Stream::jitter)}));
    const double range = outcome_range(ds, sp.aux);
    const double var = cfg.jitter_variance * range * range;
    auto jb = jitter_if_degenerate(vals.b, jr, var);
    auto js = jitter_if_degenerate(vals.s, jr, var);
    vals.b = std::move(jb.values);
    vals.s = std::move(js.values);
    vals.b_jittered = jb.jittered;
    vals.s_jittered = js.jittered;
  }
  const MainSample m = make_main_sample(ds, sp.main, vals);

  LearnerSplit out;
  out.b_jittered = vals.b_jittered;
  out.s_jittered = vals.s_jittered;
  out.tuned = proxies->meta().tuned;

  stage = "blp";
  for (Strategy st : ctx.strategies) {
    const BlpFit blp = estimate_blp(m, st);
    StrategyStat ss;
    ss.beta1 = blp.beta1;
    ss.se1 = blp.se1();
    ss.beta2 = blp.beta2;
    ss.se2 = blp.se2();
    ss.lambda = blp.lambda;
    ss.blp_dropped = blp.dropped;
    ss.blp_condition = blp.condition;
    out.by_strategy.push_back(std::move(ss));
  }
  if (!cfg.run_gates) return out;

  stage = "gates";
  const GroupScheme groups = make_groups(m.s, cfg.groups, cfg.allow_single_group);
  for (std::size_t si = 0; si < ctx.strategies.size(); ++si) {
    const Strategy st = ctx.strategies[si];
    const GatesFit g = estimate_gates(m, groups, st);
    StrategyStat& ss = out.by_strategy[si];
    const int K = groups.K;
    ss.gamma = g.gamma;
    ss.gamma_se = g.se();
    ss.gap = g.gamma[K - 1] - g.gamma[0];
    ss.gap_se = std::sqrt(std::max(g.cov(K - 1, K - 1) + g.cov(0, 0) - 2.0 * g.cov(0, K - 1), 0.0));
    ss.lambda_bar = g.lambda_bar;
    ss.homogeneity_p = g.homogeneity_p;
    stage = "band";
    Rng br(derive_seed(cfg.seed, {idx, key, static_cast<std::uint64_t>(st),
                                  static_cast<std::uint64_t>(Stream::band)}));
    const Band band = rearrange_monotone(joint_band(g.gamma, g.cov, cfg.alpha, br, cfg.band_draws));
    ss.sorted_gamma = rearrange_monotone(g.gamma);
    ss.band_lo = band.lo;
    ss.band_hi = band.hi;
    ss.band_critical = band.critical_value;
    ss.band_repaired = band.repaired;
    stage = "gates";
  }

  if (ctx.candidates.cols() > 0) {
    stage = "clan";
    Eigen::MatrixXd g(m.size(), ctx.candidates.cols());
    for (Eigen::Index k = 0; k < m.size(); ++k)
      g.row(k) = ctx.candidates.row(static_cast<Eigen::Index>(sp.main[static_cast<std::size_t>(k)]));
    const ClanFit clan = estimate_clan(m, groups, g, ctx.candidate_names, cfg.alpha);
    for (std::size_t j = 0; j < clan.variables.size(); ++j) {
      const ClanVariable& v = clan.variables[j];
      out.clan.push_back({v.delta1, v.se1, v.deltaK, v.seK, v.diff, v.se_diff});
      out.clan_corr.push_back(abs_corr(g.col(static_cast<Eigen::Index>(j)), m.s));
    }
  }
  return out;
}

SplitResult run_split(const Context& ctx, std::size_t index) {
  SplitResult r;
  r.index = index;
  std::string stage = "split";
  try {
    const Split sp = make_split(ctx.ds, ctx.cfg.seed, index, ctx.cfg.split_options);
    r.aux_size = sp.aux.size();
    r.main_size = sp.main.size();
    for (std::size_t li = 0; li < ctx.learners.size(); ++li) {
      r.learners.push_back(run_learner(ctx, li, index, sp, stage));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    r.failed = true;
    r.stage = stage;
    r.error = e.what();
    r.learners.clear();
  }
  return r;
}

std::vector<SplitResult> run_all_splits(const Context& ctx) {
  const std::size_t S = ctx.cfg.splits;
  std::vector<SplitResult> results(S);
  std::size_t workers = ctx.cfg.threads > 0 ? static_cast<std::size_t>(ctx.cfg.threads)
                                            : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, S);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= S) return;
      const std::size_t index = ctx.cfg.reverse_split_order ? S - 1 - k : k;
      try {
        results[index] = run_split(ctx, index);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(S);
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
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

void check_inclusion(const VeinSummary& v, const std::string& what) {
  if (v.ci_inversion && !v.ci_inversion->within(v.ci_lu))
    throw EstimationError(what + ": inversion interval escapes the median interval");
}

template <typename F>
VeinSummary aggregate(const std::vector<const SplitResult*>& ok, const RunConfig& cfg, const std::string& what,
                      F&& get) {
  std::vector<double> th, se;
  th.reserve(ok.size());
  se.reserve(ok.size());
  for (const SplitResult* r : ok) {
    auto [t, s] = get(*r);
    th.push_back(t);
    se.push_back(s);
  }
  VeinSummary v = summarize(th, se, cfg.alpha, cfg.sidedness);
  check_inclusion(v, what);
  return v;
}

}  // namespace

Report run_analysis(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.data_path.empty()) throw ConfigError("no data file given");
  const Dataset ds = load_dataset(cfg.data_path, cfg.schema, cfg.propensity, cfg.bounds);
  return run_analysis(ds, cfg);
}

Report run_analysis(const Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  Context ctx{ds, cfg, cfg.learners, {}, {}, strategies_of(cfg.strategy), {}, {}};

  // Unique display names; duplicates get a numeric suffix.
  std::map<std::string, int> seen;
  for (auto& l : ctx.learners) {
    const int c = ++seen[l.name];
    if (c > 1) l.name += "#" + std::to_string(c);
    const std::string canon = canonical_learner(l);
    ctx.keys.push_back(fnv1a64(canon.data(), canon.size()));
    ctx.external.push_back(l.kind == LearnerKind::external
                               ? std::make_shared<const ProxyPair>(load_external_proxies(l.external_path, ds.n(), l.name))
                               : nullptr);
  }

  if (cfg.run_gates) {
    ctx.candidate_names = cfg.clan_auto ? ds.covariate_names() : cfg.clan;
    ctx.candidates.resize(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(ctx.candidate_names.size()));
    for (std::size_t j = 0; j < ctx.candidate_names.size(); ++j) {
      auto col = ds.column(ctx.candidate_names[j]);
      if (!col) throw ConfigError("CLAN variable '" + ctx.candidate_names[j] + "' is not a column");
      ctx.candidates.col(static_cast<Eigen::Index>(j)) = *col;
    }
  }

  Report rep;
  rep.config = cfg;
  rep.config.learners = ctx.learners;
  rep.n = ds.n();
  rep.data_hash = ds.hash();
  rep.candidate_names = ctx.candidate_names;
  rep.splits = run_all_splits(ctx);

  std::vector<const SplitResult*> ok;
  for (const auto& r : rep.splits) {
    if (r.failed) {
      ++rep.failed_splits;
      if (!cfg.skip_failed_splits)
        throw EstimationError("split " + std::to_string(r.index) + " failed at stage " + r.stage + ": " + r.error);
    } else {
      ok.push_back(&r);
    }
  }
  const auto max_failed = static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(cfg.splits)));
  if (rep.failed_splits > max_failed || ok.empty())
    throw EstimationError(std::to_string(rep.failed_splits) + " of " + std::to_string(cfg.splits) +
                          " splits failed (at most 5% may be skipped)");

  const std::size_t L = ctx.learners.size();
  std::vector<std::vector<double>> lam(L), lam_bar(L);
  for (std::size_t l = 0; l < L; ++l)
    for (const SplitResult* r : ok) {
      lam[l].push_back(r->learners[l].by_strategy[0].lambda);
      if (cfg.run_gates) lam_bar[l].push_back(r->learners[l].by_strategy[0].lambda_bar);
    }
  rep.choice = select_best_learners(lam, lam_bar);
  if (!cfg.run_gates) rep.choice.gates = rep.choice.blp;
  for (std::size_t l = 0; l < L; ++l)
    rep.scores.push_back({ctx.learners[l].name, medians(lam[l]).mid,
                          cfg.run_gates ? medians(lam_bar[l]).mid : 0.0});

  // CLAN variables: the requested list, or the covariates most correlated
  // with the GATES learner's S.
  std::vector<std::size_t> clan_idx;
  if (cfg.run_gates) {
    if (cfg.clan_auto) {
      std::vector<std::pair<double, std::size_t>> ranked;
      for (std::size_t j = 0; j < ctx.candidate_names.size(); ++j) {
        std::vector<double> c;
        for (const SplitResult* r : ok) c.push_back(r->learners[rep.choice.gates].clan_corr[j]);
        const double med = medians(c).mid;
        if (med >= 0.01) ranked.emplace_back(med, j);
      }
      std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
      for (std::size_t q = 0; q < ranked.size() && q < 3; ++q) clan_idx.push_back(ranked[q].second);
    } else {
      for (std::size_t j = 0; j < ctx.candidate_names.size(); ++j) clan_idx.push_back(j);
    }
  }
  for (std::size_t j : clan_idx) rep.clan_variables.push_back(ctx.candidate_names[j]);

  const std::size_t bl = rep.choice.blp, gl = rep.choice.gates;
  for (std::size_t si = 0; si < ctx.strategies.size(); ++si) {
    StrategyReport sr;
    sr.strategy = ctx.strategies[si];
    auto blp_stat = [&](const SplitResult& r) -> const StrategyStat& { return r.learners[bl].by_strategy[si]; };
    auto gates_stat = [&](const SplitResult& r) -> const StrategyStat& { return r.learners[gl].by_strategy[si]; };
    sr.beta1 = aggregate(ok, cfg, "beta1", [&](const SplitResult& r) {
      const auto& s = blp_stat(r);
      return std::pair{s.beta1, s.se1};
    });
    sr.beta2 = aggregate(ok, cfg, "beta2", [&](const SplitResult& r) {
      const auto& s = blp_stat(r);
      return std::pair{s.beta2, s.se2};
    });
    if (cfg.run_gates) {
      const int K = cfg.groups;
      for (int k = 0; k < K; ++k) {
        sr.gamma.push_back(aggregate(ok, cfg, "gamma" + std::to_string(k + 1), [&](const SplitResult& r) {
          const auto& s = gates_stat(r);
          return std::pair{s.gamma[k], s.gamma_se[k]};
        }));
        std::vector<double> pt, lo, hi;
        for (const SplitResult* r : ok) {
          const auto& s = gates_stat(*r);
          pt.push_back(s.sorted_gamma[k]);
          lo.push_back(s.band_lo[k]);
          hi.push_back(s.band_hi[k]);
        }
        sr.band.push_back({k + 1, medians(pt).mid, upper_median(lo), lower_median(hi)});
      }
      sr.gap = aggregate(ok, cfg, "gamma_gap", [&](const SplitResult& r) {
        const auto& s = gates_stat(r);
        return std::pair{s.gap, s.gap_se};
      });
      std::vector<double> hp;
      for (const SplitResult* r : ok) hp.push_back(gates_stat(*r).homogeneity_p);
      sr.homogeneity = adjusted_pvalue(hp);
      for (std::size_t j : clan_idx) {
        ClanSummary cs;
        cs.name = ctx.candidate_names[j];
        auto clan_at = [&](const SplitResult& r) -> const ClanStat& { return r.learners[gl].clan[j]; };
        cs.delta1 = aggregate(ok, cfg, cs.name, [&](const SplitResult& r) {
          return std::pair{clan_at(r).delta1, clan_at(r).se1};
        });
        cs.deltaK = aggregate(ok, cfg, cs.name, [&](const SplitResult& r) {
          return std::pair{clan_at(r).deltaK, clan_at(r).seK};
        });
        cs.diff = aggregate(ok, cfg, cs.name, [&](const SplitResult& r) {
          return std::pair{clan_at(r).diff, clan_at(r).se_diff};
        });
        sr.clan.push_back(std::move(cs));
      }
    }
    rep.strategies.push_back(std::move(sr));
  }
  return rep;
}

}  // namespace hetfx
