#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetfx/error.hpp"
#include "hetfx/pipeline.hpp"
#include "hetfx/report.hpp"
#include "hetfx/sim.hpp"

using namespace hetfx;
namespace fs = std::filesystem;

namespace {

const std::string kData = std::string(HETFX_TEST_DATA) + "/synthetic.csv";

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig golden_config() {
  std::ifstream in(std::string(HETFX_TEST_DATA) + "/golden_config.json");
  RunConfig cfg = config_from_json(Json::parse(in));
  cfg.data_path = kData;
  return cfg;
}

RunConfig quick_config() {
  RunConfig cfg = golden_config();
  cfg.learners = {LearnerSpec::parse("elastic_net[lambda=0.01;alpha=0.5]"), LearnerSpec::parse("forest[trees=10]")};
  cfg.splits = 6;
  return cfg;
}

std::vector<const VeinSummary*> all_summaries(const Report& rep) {
  std::vector<const VeinSummary*> out;
  for (const auto& sr : rep.strategies) {
    out.push_back(&sr.beta1);
    out.push_back(&sr.beta2);
    for (const auto& g : sr.gamma) out.push_back(&g);
    if (sr.gap) out.push_back(&*sr.gap);
    for (const auto& c : sr.clan) {
      out.push_back(&c.delta1);
      out.push_back(&c.deltaK);
      out.push_back(&c.diff);
    }
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hetfx_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HETFX_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, GoldenReportIsByteIdentical) {
  RunConfig cfg = golden_config();
  cfg.threads = 2;
  const Report rep = run_analysis(cfg);
  EXPECT_EQ(report_json_text(rep), slurp(std::string(HETFX_TEST_DATA) + "/golden_report.json"));
}

TEST(Pipeline, IndependentOfThreadsAndSplitOrder) {
  RunConfig a = quick_config();
  a.threads = 1;
  RunConfig b = a;
  b.threads = 3;
  b.reverse_split_order = true;
  EXPECT_EQ(report_json_text(run_analysis(a)), report_json_text(run_analysis(b)));
}

TEST(Pipeline, JsonRoundTrip) {
  const std::string text = report_json_text(run_analysis(quick_config()));
  EXPECT_EQ(Json::parse(text).dump(2) + "\n", text);
}

TEST(Pipeline, ConfigRoundTrip) {
  const RunConfig cfg = golden_config();
  const Json j = config_to_json(cfg);
  RunConfig back = config_from_json(j);
  back.data_path = cfg.data_path;
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  RunConfig other = cfg;
  other.seed += 1;
  EXPECT_NE(config_hash(other), config_hash(cfg));
  EXPECT_THROW(config_from_json(Json{{"splitz", 3}}), ConfigError);
  EXPECT_THROW(config_from_json(Json{{"splits", "many"}}), ConfigError);
}

TEST(Pipeline, SummaryRowCount) {
  RunConfig cfg = quick_config();
  cfg.clan_auto = false;
  cfg.clan = {"age", "region=hills"};
  cfg.groups = 3;
  const Report rep = run_analysis(cfg);
  const std::string csv = summary_csv(rep);
  const auto lines = static_cast<int>(std::count(csv.begin(), csv.end(), '\n'));
  EXPECT_EQ(lines - 1, 2 + 3 + 1 + 3 * 2);
  EXPECT_EQ(rep.clan_variables, cfg.clan);
}

TEST(Pipeline, InversionIntervalsNestInMedianIntervals) {
  const Report rep = run_analysis(quick_config());
  for (const VeinSummary* v : all_summaries(rep)) {
    if (v->ci_inversion) EXPECT_TRUE(v->ci_inversion->within(v->ci_lu));
    EXPECT_NEAR(v->level(), 0.9, 1e-15);
  }
}

TEST(Pipeline, SingleSplitCollapsesToConditionalInference) {
  RunConfig cfg = quick_config();
  cfg.splits = 1;
  const Report rep = run_analysis(cfg);
  const auto& stat = rep.splits[0].learners[rep.choice.blp].by_strategy[0];
  const VeinSummary& b2 = rep.primary().beta2;
  const double z = 1.959963984540054;
  EXPECT_EQ(b2.point, stat.beta2);
  EXPECT_NEAR(b2.ci_lu.lo, stat.beta2 - z * stat.se2, 1e-12);
  EXPECT_NEAR(b2.ci_lu.hi, stat.beta2 + z * stat.se2, 1e-12);
  EXPECT_NEAR(b2.p_adjusted, std::min(1.0, 2 * split_pvalue(stat.beta2, stat.se2, Sidedness::two_sided)), 1e-15);
}

TEST(Pipeline, SelectBestLearnersExamples) {
  auto one = select_best_learners({{1, 2, 3}}, {{0.5}});
  EXPECT_EQ(one.blp, 0u);
  EXPECT_EQ(one.gates, 0u);
  auto split = select_best_learners({{2, 2}, {1, 1}}, {{1, 1}, {3, 3}});
  EXPECT_EQ(split.blp, 0u);
  EXPECT_EQ(split.gates, 1u);
  EXPECT_FALSE(split.blp_tie);
  auto tie = select_best_learners({{1, 2}, {2, 1}}, {{5}, {5}});
  EXPECT_EQ(tie.blp, 0u);
  EXPECT_TRUE(tie.blp_tie);
  EXPECT_TRUE(tie.gates_tie);
  EXPECT_EQ(tie.gates, 0u);
}

TEST(Pipeline, DuplicatingALearnerKeepsTheWinner) {
  RunConfig cfg = quick_config();
  const Report base = run_analysis(cfg);
  RunConfig dup = cfg;
  dup.learners.push_back(cfg.learners[0]);
  dup.learners.push_back(cfg.learners[1]);
  const Report rep = run_analysis(dup);
  EXPECT_EQ(rep.choice.blp, base.choice.blp);
  EXPECT_EQ(rep.choice.gates, base.choice.gates);
  EXPECT_EQ(rep.scores[2].lambda_median, rep.scores[0].lambda_median);
  EXPECT_EQ(rep.config.learners[2].name.back(), '2');
}

TEST(Pipeline, BothStrategiesReported) {
  const Report rep = run_analysis(quick_config());
  ASSERT_EQ(rep.strategies.size(), 2u);
  EXPECT_EQ(rep.primary().strategy, Strategy::weighted);
  EXPECT_EQ(rep.strategies[1].strategy, Strategy::ht);
  const Json j = report_to_json(rep);
  EXPECT_TRUE(j["results"].contains("ht"));
  EXPECT_EQ(j["per_split"].size(), 6u);
}

TEST(Pipeline, FailedSplitsAbortUnlessSkipped) {
  const fs::path dir = temp_dir("ext");
  fs::create_directories(dir);
  // S takes two values, so K=4 quantile groups cannot all be filled.
  const std::string ext = (dir / "proxies.csv").string();
  {
    std::ofstream out(ext);
    out << "row_id,B,S\n";
    for (int i = 0; i < 360; ++i) out << i << ",0," << (i % 10 == 0 ? 1 : 0) << "\n";
  }
  RunConfig cfg = quick_config();
  cfg.learners = {LearnerSpec::parse("external:" + ext)};
  try {
    run_analysis(cfg);
    FAIL();
  } catch (const EstimationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("split 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("gates"), std::string::npos) << msg;
  }
  cfg.skip_failed_splits = true;
  EXPECT_THROW(run_analysis(cfg), EstimationError);
  cfg.run_gates = false;
  EXPECT_NO_THROW(run_analysis(cfg));
  fs::remove_all(dir);
}

TEST(Pipeline, ConfigErrors) {
  RunConfig cfg = quick_config();
  cfg.clan_auto = false;
  cfg.clan = {"no_such_column"};
  EXPECT_THROW(run_analysis(cfg), ConfigError);
  cfg = quick_config();
  cfg.groups = 1;
  EXPECT_THROW(run_analysis(cfg), ConfigError);
  cfg.allow_single_group = true;
  EXPECT_NO_THROW(run_analysis(cfg));
  cfg = quick_config();
  cfg.splits = 0;
  EXPECT_THROW(run_analysis(cfg), ConfigError);
  cfg = quick_config();
  cfg.learners.clear();
  EXPECT_THROW(run_analysis(cfg), ConfigError);
}

TEST(Pipeline, HomogeneousDesignRarelyRejects) {
  int large_p = 0;
  const int reruns = 100;
  for (int r = 0; r < reruns; ++r) {
    const SimData sim = gen_design(SimDesign::figure(false, 1000, 1000 + r));
    RunConfig cfg;
    cfg.learners = {LearnerSpec::parse("elastic_net")};
    cfg.splits = 100;
    cfg.run_gates = false;
    cfg.threads = 1;
    cfg.seed = static_cast<std::uint64_t>(r);
    large_p += run_analysis(sim.data, cfg).primary().beta2.p_adjusted > 0.1;
  }
  EXPECT_GE(large_p, 90);
}

TEST(Pipeline, LinearDesignRejects) {
  const SimData sim = gen_design(SimDesign::figure(true, 800, 31));
  RunConfig cfg;
  cfg.learners = {LearnerSpec::parse("elastic_net")};
  cfg.splits = 100;
  cfg.seed = 5;
  const Report rep = run_analysis(sim.data, cfg);
  EXPECT_LE(rep.primary().beta2.p_adjusted, 0.05);
  // GATES increase across groups and the band stays ordered.
  const auto& band = rep.primary().band;
  for (std::size_t k = 1; k < band.size(); ++k) EXPECT_LE(band[k - 1].point, band[k].point);
  for (const auto& b : band) EXPECT_LE(b.lo, b.hi);
}

TEST(Pipeline, EmitWritesAllFiles) {
  const fs::path dir = temp_dir("emit");
  const Report rep = run_analysis(quick_config());
  emit_report(rep, dir.string(), true);
  for (const char* f : {"report.json", "summary.csv", "gates_band.csv", "gates.svg"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp((dir / "report.json").string()), report_json_text(rep));
  EXPECT_NE(slurp((dir / "gates.svg").string()).find("<svg"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const fs::path out = temp_dir("cli");
  const std::string base = "run --data " + kData +
                           " --outcome outcome --treatment treated --covariates age,income --propensity pscore"
                           " --learners elastic_net --splits 3 --out " + out.string();
  EXPECT_EQ(run_cli(base), 0);
  EXPECT_TRUE(fs::exists(out / "report.json"));
  EXPECT_EQ(run_cli(base + " --alpha 0.4"), 1);
  EXPECT_EQ(run_cli(base + " --strategy sideways"), 1);
  EXPECT_EQ(run_cli("run --data " + kData + " --outcome nope --treatment treated --out " + out.string()), 2);
  EXPECT_EQ(run_cli("run --data /no/such/file.csv --outcome y --treatment d --out " + out.string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  fs::remove_all(out);
}

TEST(Cli, SimPowerWritesTables) {
  const fs::path out = temp_dir("power");
  EXPECT_EQ(run_cli("sim power --n 100 --beta 0,0.8 --reps 20 --splits 5 --seed 1 --out " + out.string()), 0);
  const std::string standard = slurp((out / "power_standard.csv").string());
  const std::string proposed = slurp((out / "power_proposed.csv").string());
  EXPECT_EQ(std::count(standard.begin(), standard.end(), '\n'), 3);
  EXPECT_EQ(std::count(proposed.begin(), proposed.end(), '\n'), 3);
  fs::remove_all(out);
}
