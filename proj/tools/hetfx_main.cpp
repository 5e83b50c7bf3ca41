#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hetfx/csv.hpp"
#include "hetfx/error.hpp"
#include "hetfx/pipeline.hpp"
#include "hetfx/report.hpp"
#include "hetfx/sim.hpp"

namespace {

using namespace hetfx;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto end = s.find(',', pos);
    if (end == std::string::npos) end = s.size();
    if (end > pos) out.push_back(s.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

// Learner lists are comma separated, but commas inside [...] belong to the
// learner's own options.
std::vector<std::string> split_learners(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

struct RunArgs {
  std::string config, data, outcome, treatment, covariates, categorical, controls, fixed_effects;
  std::string propensity, learners, strategy, cluster, strata, weights, clan, out, sidedness;
  std::size_t splits = 0;
  double alpha = 0.0;
  int groups = 0, threads = 0;
  std::uint64_t seed = 0;
  bool plot = false, skip_failed = false;
};

int do_run(const RunArgs& a, CLI::App& cmd) {
  RunConfig cfg;
  cfg.learners = {LearnerSpec::parse("elastic_net"), LearnerSpec::parse("forest")};
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot read config file " + a.config);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(a.config + ": " + e.what());
    }
    cfg = config_from_json(j, cfg);
  }
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  if (given("--data")) cfg.data_path = a.data;
  if (given("--outcome")) cfg.schema.outcome = a.outcome;
  if (given("--treatment")) cfg.schema.treatment = a.treatment;
  if (given("--covariates")) cfg.schema.covariates = split_list(a.covariates);
  if (given("--categorical")) cfg.schema.categorical = split_list(a.categorical);
  if (given("--controls")) cfg.schema.controls = split_list(a.controls);
  if (given("--fixed-effects")) cfg.schema.fixed_effects = split_list(a.fixed_effects);
  if (given("--cluster")) cfg.schema.cluster = a.cluster;
  if (given("--strata")) cfg.schema.strata = a.strata;
  if (given("--weights")) cfg.schema.weights = a.weights;
  if (given("--propensity")) {
    if (auto v = parse_number(a.propensity)) cfg.propensity = *v;
    else cfg.propensity = a.propensity;
  }
  if (given("--learners")) {
    cfg.learners.clear();
    for (const auto& l : split_learners(a.learners)) cfg.learners.push_back(LearnerSpec::parse(l));
  }
  if (given("--splits")) cfg.splits = a.splits;
  if (given("--alpha")) cfg.alpha = a.alpha;
  if (given("--groups")) cfg.groups = a.groups;
  if (given("--strategy")) cfg.strategy = parse_strategy(a.strategy);
  if (given("--sidedness")) cfg = config_from_json(Json{{"sidedness", a.sidedness}}, cfg);
  if (given("--clan")) {
    cfg.clan_auto = a.clan == "auto";
    cfg.clan = cfg.clan_auto ? std::vector<std::string>{} : split_list(a.clan);
  }
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--out")) cfg.out_dir = a.out;
  if (given("--plot")) cfg.plot = true;
  if (given("--skip-failed-splits")) cfg.skip_failed_splits = true;
  if (given("--threads")) cfg.threads = a.threads;

  if (cfg.schema.outcome.empty() || cfg.schema.treatment.empty())
    throw ConfigError("--outcome and --treatment are required");
  if (cfg.out_dir.empty()) throw ConfigError("--out is required");

  const Report rep = run_analysis(cfg);
  emit_report(rep, cfg.out_dir, cfg.plot);

  const StrategyReport& sr = rep.primary();
  std::cout << "selected learners: BLP " << rep.config.learners[rep.choice.blp].name << ", GATES "
            << rep.config.learners[rep.choice.gates].name << "\n";
  std::cout << "ATE " << format_number(sr.beta1.point) << " [" << format_number(sr.beta1.ci_lu.lo) << ", "
            << format_number(sr.beta1.ci_lu.hi) << "] p=" << format_number(sr.beta1.p_adjusted) << "\n";
  std::cout << "HET " << format_number(sr.beta2.point) << " [" << format_number(sr.beta2.ci_lu.lo) << ", "
            << format_number(sr.beta2.ci_lu.hi) << "] p=" << format_number(sr.beta2.p_adjusted) << "\n";
  if (rep.failed_splits) std::cout << rep.failed_splits << " split(s) skipped\n";
  std::cout << "wrote " << cfg.out_dir << "\n";
  return 0;
}

struct PowerArgs {
  std::string ns = "100,200,400", betas = "0,0.2,0.4", out, method = "both";
  std::size_t reps = 500, splits = 50;
  double alpha = 0.05, alpha2 = 0.0;
  std::uint64_t seed = 0;
  int threads = 0;
  bool full = false;
};

int do_power(const PowerArgs& a, CLI::App& cmd) {
  PowerOptions opt;
  opt.ns.clear();
  opt.betas.clear();
  for (const auto& s : split_list(a.ns)) {
    auto v = parse_number(s);
    if (!v || *v < 4 || *v != std::floor(*v)) throw ConfigError("bad sample size '" + s + "'");
    opt.ns.push_back(static_cast<std::size_t>(*v));
  }
  for (const auto& s : split_list(a.betas)) {
    auto v = parse_number(s);
    if (!v) throw ConfigError("bad beta '" + s + "'");
    opt.betas.push_back(*v);
  }
  opt.reps = a.full && !cmd.count("--reps") ? 5000 : a.reps;
  opt.splits = a.full && !cmd.count("--splits") ? 100 : a.splits;
  opt.alpha = a.alpha;
  opt.alpha2 = a.alpha2;
  opt.seed = a.seed;
  opt.threads = a.threads;
  if (opt.reps < 1 || opt.splits < 1) throw ConfigError("reps and splits must be positive");
  if (a.method != "both" && a.method != "standard" && a.method != "proposed")
    throw ConfigError("unknown method '" + a.method + "'");

  std::filesystem::create_directories(a.out);
  auto write = [&](const PowerTable& t) {
    const std::string path = (std::filesystem::path(a.out) / ("power_" + t.method + ".csv")).string();
    std::ofstream out(path, std::ios::binary);
    out << power_csv(t);
    if (!out) throw ConfigError("cannot write " + path);
    std::cout << power_csv(t);
  };
  if (a.method != "proposed") write(standard_power(opt));
  if (a.method != "standard") write(proposed_power(opt));
  return 0;
}

struct GenArgs {
  std::string design = "interactive", out;
  std::size_t n = 1000;
  double beta = 0.0, alpha2 = 0.0;
  std::uint64_t seed = 0;
};

int do_gen(const GenArgs& a) {
  SimDesign d;
  if (a.design == "interactive") d = SimDesign::interactive_design(a.n, a.beta, a.seed, a.alpha2);
  else if (a.design == "figure_null") d = SimDesign::figure(false, a.n, a.seed);
  else if (a.design == "figure_linear") d = SimDesign::figure(true, a.n, a.seed);
  else throw ConfigError("unknown design '" + a.design + "'");
  write_sim_csv(gen_design(d), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generic heterogeneous treatment effect inference for randomized experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  RunArgs ra;
  auto* run = app.add_subcommand("run", "estimate BLP, GATES and CLAN over repeated sample splits");
  run->add_option("--config", ra.config, "JSON config file; flags override its values");
  run->add_option("--data", ra.data, "CSV data file");
  run->add_option("--outcome", ra.outcome, "outcome column");
  run->add_option("--treatment", ra.treatment, "binary treatment column");
  run->add_option("--covariates", ra.covariates, "comma separated covariate columns");
  run->add_option("--categorical", ra.categorical, "covariates or fixed effects read as categorical");
  run->add_option("--controls", ra.controls, "extra numeric regressors");
  run->add_option("--fixed-effects", ra.fixed_effects, "categorical extra regressors");
  run->add_option("--propensity", ra.propensity, "constant propensity or a column name");
  run->add_option("--splits", ra.splits, "number of random splits");
  run->add_option("--alpha", ra.alpha, "significance level (intervals have level 1-2alpha)");
  run->add_option("--groups", ra.groups, "number of GATES groups");
  run->add_option("--learners", ra.learners, "e.g. elastic_net,forest[trees=200]");
  run->add_option("--strategy", ra.strategy, "weighted, ht or both");
  run->add_option("--sidedness", ra.sidedness, "per-split p-values: two_sided, left or right");
  run->add_option("--cluster", ra.cluster, "cluster id column");
  run->add_option("--strata", ra.strata, "stratum id column");
  run->add_option("--weights", ra.weights, "sampling weight column");
  run->add_option("--clan", ra.clan, "CLAN variables, or auto");
  run->add_option("--seed", ra.seed, "master seed");
  run->add_option("--out", ra.out, "output directory");
  run->add_option("--threads", ra.threads, "worker threads (0 = all cores)");
  run->add_flag("--plot", ra.plot, "also write gates.svg");
  run->add_flag("--skip-failed-splits", ra.skip_failed, "tolerate up to 5% failed splits");

  auto* sim = app.add_subcommand("sim", "simulation studies and synthetic data");
  sim->require_subcommand(1);
  PowerArgs pa;
  auto* power = sim->add_subcommand("power", "size and power of the standard and split-adjusted tests");
  power->add_option("--n", pa.ns, "sample sizes");
  power->add_option("--beta", pa.betas, "interaction coefficients");
  power->add_option("--reps", pa.reps, "replications per cell");
  power->add_option("--splits", pa.splits, "splits per replication");
  power->add_option("--alpha", pa.alpha, "test level");
  power->add_option("--alpha2", pa.alpha2, "constant treatment effect");
  power->add_option("--method", pa.method, "standard, proposed or both");
  power->add_option("--seed", pa.seed, "master seed");
  power->add_option("--threads", pa.threads, "worker threads (0 = all cores)");
  power->add_option("--out", pa.out, "output directory")->required();
  power->add_flag("--full", pa.full, "5000 reps and 100 splits");

  GenArgs ga;
  auto* gen = sim->add_subcommand("gen", "write a synthetic dataset as CSV");
  gen->add_option("--design", ga.design, "interactive, figure_null or figure_linear");
  gen->add_option("--n", ga.n, "rows");
  gen->add_option("--beta", ga.beta, "interaction coefficient (interactive)");
  gen->add_option("--alpha2", ga.alpha2, "constant effect (interactive)");
  gen->add_option("--seed", ga.seed, "seed");
  gen->add_option("--out", ga.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return do_run(ra, *run);
    if (*power) return do_power(pa, *power);
    if (*gen) return do_gen(ga);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
