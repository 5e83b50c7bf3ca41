#include "hetfx/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetfx/csv.hpp"
#include "hetfx/error.hpp"

namespace hetfx {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

std::vector<std::string> string_list(const Json& j, const std::string& key) {
  if (j.is_string()) {
    std::vector<std::string> out;
    std::string s = j.get<std::string>();
    std::size_t pos = 0;
    while (pos <= s.size()) {
      auto end = s.find(',', pos);
      if (end == std::string::npos) end = s.size();
      if (end > pos) out.push_back(s.substr(pos, end - pos));
      pos = end + 1;
    }
    return out;
  }
  if (!j.is_array()) throw ConfigError("config key '" + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a list of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

Json optional_string(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

std::string sidedness_name(Sidedness s) {
  switch (s) {
    case Sidedness::left: return "left";
    case Sidedness::right: return "right";
    case Sidedness::two_sided: return "two_sided";
  }
  return "?";
}

Sidedness parse_sidedness(const std::string& s) {
  if (s == "left") return Sidedness::left;
  if (s == "right") return Sidedness::right;
  if (s == "two_sided") return Sidedness::two_sided;
  throw ConfigError("unknown sidedness '" + s + "'");
}

}  // namespace

std::string format_number(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

Json learner_to_json(const LearnerSpec& spec) {
  Json j;
  j["name"] = spec.name;
  j["kind"] = to_string(spec.kind);
  if (spec.kind == LearnerKind::external) j["path"] = spec.external_path;
  j["target"] = to_string(spec.target_mode);
  j["tuning"] = spec.tuning.kind == Tuning::Kind::cv ? "cv" : "fixed";
  j["folds"] = spec.tuning.folds;
  j["repeats"] = spec.tuning.repeats;
  Json params = Json::object();
  for (const auto& [k, v] : spec.hyperparams) params[k] = v;
  j["params"] = params;
  return j;
}

LearnerSpec learner_from_json(const Json& j) {
  if (j.is_string()) return LearnerSpec::parse(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("learner entries must be strings or objects");
  try {
    const std::string kind = j.at("kind").get<std::string>();
    LearnerSpec spec = LearnerSpec::parse(kind == "external" ? "external:" + j.at("path").get<std::string>() : kind);
    if (j.contains("name")) spec.name = j["name"].get<std::string>();
    if (j.contains("target"))
      spec.target_mode = j["target"].get<std::string>() == "ht_joint" ? TargetMode::ht_joint : TargetMode::arm_difference;
    if (j.contains("tuning"))
      spec.tuning.kind = j["tuning"].get<std::string>() == "cv" ? Tuning::Kind::cv : Tuning::Kind::fixed;
    if (j.contains("folds")) spec.tuning.folds = j["folds"].get<int>();
    if (j.contains("repeats")) spec.tuning.repeats = j["repeats"].get<int>();
    if (j.contains("params"))
      for (const auto& [k, v] : j["params"].items()) spec.hyperparams[k] = v.get<double>();
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad learner entry: ") + e.what());
  }
}

Json config_to_json(const RunConfig& cfg) {
  Json j;
  j["data"] = std::filesystem::path(cfg.data_path).filename().string();
  const DatasetSchema& s = cfg.schema;
  j["outcome"] = s.outcome;
  j["treatment"] = s.treatment;
  j["covariates"] = s.covariates;
  j["categorical"] = s.categorical;
  j["controls"] = s.controls;
  j["fixed_effects"] = s.fixed_effects;
  j["strata"] = optional_string(s.strata);
  j["cluster"] = optional_string(s.cluster);
  j["weights"] = optional_string(s.weights);
  if (const double* p = std::get_if<double>(&cfg.propensity)) j["propensity"] = *p;
  else j["propensity"] = std::get<std::string>(cfg.propensity);
  j["propensity_bounds"] = Json::array({cfg.bounds.lo, cfg.bounds.hi});
  Json learners = Json::array();
  for (const auto& l : cfg.learners) learners.push_back(learner_to_json(l));
  j["learners"] = learners;
  j["splits"] = cfg.splits;
  j["alpha"] = cfg.alpha;
  j["groups"] = cfg.groups;
  j["strategy"] = to_string(cfg.strategy);
  j["sidedness"] = sidedness_name(cfg.sidedness);
  j["aux_fraction"] = cfg.split_options.aux_fraction;
  if (cfg.clan_auto) j["clan"] = "auto";
  else j["clan"] = cfg.clan;
  j["seed"] = cfg.seed;
  j["skip_failed_splits"] = cfg.skip_failed_splits;
  j["band_draws"] = cfg.band_draws;
  j["jitter_variance"] = cfg.jitter_variance;
  j["gates"] = cfg.run_gates;
  return j;
}

RunConfig config_from_json(const Json& j, RunConfig cfg) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "data") cfg.data_path = v.get<std::string>();
      else if (key == "outcome") cfg.schema.outcome = v.get<std::string>();
      else if (key == "treatment") cfg.schema.treatment = v.get<std::string>();
      else if (key == "covariates") cfg.schema.covariates = string_list(v, key);
      else if (key == "categorical") cfg.schema.categorical = string_list(v, key);
      else if (key == "controls") cfg.schema.controls = string_list(v, key);
      else if (key == "fixed_effects") cfg.schema.fixed_effects = string_list(v, key);
      else if (key == "strata" || key == "cluster" || key == "weights") {
        std::optional<std::string> val;
        if (!v.is_null()) val = v.get<std::string>();
        (key == "strata" ? cfg.schema.strata : key == "cluster" ? cfg.schema.cluster : cfg.schema.weights) = val;
      } else if (key == "propensity") {
        if (v.is_number()) cfg.propensity = v.get<double>();
        else cfg.propensity = v.get<std::string>();
      } else if (key == "propensity_bounds") {
        cfg.bounds.lo = v.at(0).get<double>();
        cfg.bounds.hi = v.at(1).get<double>();
      } else if (key == "learners") {
        cfg.learners.clear();
        if (v.is_string()) {
          for (const auto& s : string_list(v, key)) cfg.learners.push_back(LearnerSpec::parse(s));
        } else {
          for (const auto& l : v) cfg.learners.push_back(learner_from_json(l));
        }
      } else if (key == "splits") cfg.splits = v.get<std::size_t>();
      else if (key == "alpha") cfg.alpha = v.get<double>();
      else if (key == "groups") cfg.groups = v.get<int>();
      else if (key == "strategy") cfg.strategy = parse_strategy(v.get<std::string>());
      else if (key == "sidedness") cfg.sidedness = parse_sidedness(v.get<std::string>());
      else if (key == "aux_fraction") cfg.split_options.aux_fraction = v.get<double>();
      else if (key == "clan") {
        if (v.is_string() && v.get<std::string>() == "auto") {
          cfg.clan_auto = true;
          cfg.clan.clear();
        } else {
          cfg.clan_auto = false;
          cfg.clan = string_list(v, key);
        }
      } else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "out") cfg.out_dir = v.get<std::string>();
      else if (key == "plot") cfg.plot = v.get<bool>();
      else if (key == "skip_failed_splits") cfg.skip_failed_splits = v.get<bool>();
      else if (key == "threads") cfg.threads = v.get<int>();
      else if (key == "band_draws") cfg.band_draws = v.get<int>();
      else if (key == "jitter_variance") cfg.jitter_variance = v.get<double>();
      else if (key == "gates") cfg.run_gates = v.get<bool>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  return hex64(fnv1a64(text.data(), text.size()));
}

Json vein_to_json(const VeinSummary& v) {
  Json j;
  j["estimate"] = number_or_null(v.point);
  j["lower_median"] = number_or_null(v.estimate.lower);
  j["upper_median"] = number_or_null(v.estimate.upper);
  j["ci_lo"] = number_or_null(v.ci_lu.lo);
  j["ci_hi"] = number_or_null(v.ci_lu.hi);
  if (v.ci_inversion && !v.ci_inversion->empty()) {
    j["inv_lo"] = number_or_null(v.ci_inversion->lo);
    j["inv_hi"] = number_or_null(v.ci_inversion->hi);
  } else {
    j["inv_lo"] = nullptr;
    j["inv_hi"] = nullptr;
  }
  j["inv_empty"] = v.ci_inversion && v.ci_inversion->empty();
  j["p_adjusted"] = number_or_null(v.p_adjusted);
  j["p_raw"] = number_or_null(v.p_raw);
  j["level"] = v.level();
  return j;
}

namespace {

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v[i]));
  return a;
}

Json strategy_report_json(const StrategyReport& sr, bool gates) {
  Json j;
  j["blp"] = {{"beta1", vein_to_json(sr.beta1)}, {"beta2", vein_to_json(sr.beta2)}};
  if (!gates) return j;
  Json g;
  Json gamma = Json::array();
  for (const auto& v : sr.gamma) gamma.push_back(vein_to_json(v));
  g["gamma"] = gamma;
  if (sr.gap) g["gap"] = vein_to_json(*sr.gap);
  g["homogeneity"] = {{"p_adjusted", sr.homogeneity.capped}, {"p_raw", sr.homogeneity.raw}};
  Json band = Json::array();
  for (const auto& b : sr.band)
    band.push_back({{"group", b.group}, {"point", number_or_null(b.point)}, {"lo", number_or_null(b.lo)},
                    {"hi", number_or_null(b.hi)}});
  g["band"] = band;
  j["gates"] = g;
  Json clan = Json::array();
  for (const auto& c : sr.clan)
    clan.push_back({{"name", c.name},
                    {"delta1", vein_to_json(c.delta1)},
                    {"deltaK", vein_to_json(c.deltaK)},
                    {"diff", vein_to_json(c.diff)}});
  j["clan"] = clan;
  return j;
}

Json split_json(const SplitResult& r, const Report& rep) {
  Json j;
  j["index"] = r.index;
  if (r.failed) {
    j["failed"] = true;
    j["stage"] = r.stage;
    j["error"] = r.error;
    return j;
  }
  j["failed"] = false;
  j["aux_size"] = r.aux_size;
  j["main_size"] = r.main_size;
  const auto strategies = strategies_of(rep.config.strategy);
  Json learners = Json::array();
  for (std::size_t l = 0; l < r.learners.size(); ++l) {
    const LearnerSplit& ls = r.learners[l];
    Json lj;
    lj["learner"] = rep.config.learners[l].name;
    lj["b_jittered"] = ls.b_jittered;
    lj["s_jittered"] = ls.s_jittered;
    Json tuned = Json::object();
    for (const auto& [k, v] : ls.tuned) tuned[k] = number_or_null(v);
    lj["tuned"] = tuned;
    Json by = Json::object();
    for (std::size_t si = 0; si < ls.by_strategy.size(); ++si) {
      const StrategyStat& s = ls.by_strategy[si];
      Json sj;
      sj["beta1"] = number_or_null(s.beta1);
      sj["se1"] = number_or_null(s.se1);
      sj["beta2"] = number_or_null(s.beta2);
      sj["se2"] = number_or_null(s.se2);
      sj["lambda"] = number_or_null(s.lambda);
      sj["condition"] = number_or_null(s.blp_condition);
      sj["dropped"] = s.blp_dropped;
      if (rep.config.run_gates) {
        sj["gamma"] = vector_json(s.gamma);
        sj["gamma_se"] = vector_json(s.gamma_se);
        sj["lambda_bar"] = number_or_null(s.lambda_bar);
        sj["homogeneity_p"] = number_or_null(s.homogeneity_p);
        sj["band_critical"] = number_or_null(s.band_critical);
        sj["band_repaired"] = s.band_repaired;
      }
      by[to_string(strategies[si])] = sj;
    }
    lj["strategies"] = by;
    learners.push_back(lj);
  }
  j["learners"] = learners;
  return j;
}

}  // namespace

Json report_to_json(const Report& rep) {
  Json j;
  j["tool"] = "hetfx";
  j["version"] = kVersion;
  j["config"] = config_to_json(rep.config);

  Json prov;
  prov["seed"] = rep.config.seed;
  prov["config_hash"] = config_hash(rep.config);
  prov["data_hash"] = hex64(rep.data_hash);
  prov["rows"] = rep.n;
  prov["splits_requested"] = rep.config.splits;
  prov["splits_used"] = rep.config.splits - rep.failed_splits;
  Json failed = Json::array();
  for (const auto& r : rep.splits)
    if (r.failed) failed.push_back({{"index", r.index}, {"stage", r.stage}, {"error", r.error}});
  prov["failed_splits"] = failed;
  prov["selection_ties"] = {{"blp", rep.choice.blp_tie}, {"gates", rep.choice.gates_tie}};
  j["provenance"] = prov;

  Json scores = Json::array();
  for (const auto& s : rep.scores)
    scores.push_back({{"learner", s.name},
                      {"lambda_median", number_or_null(s.lambda_median)},
                      {"lambda_bar_median", number_or_null(s.lambda_bar_median)}});
  j["learner_scores"] = scores;
  j["selected"] = {{"blp", rep.config.learners[rep.choice.blp].name},
                   {"gates", rep.config.learners[rep.choice.gates].name}};
  j["clan_variables"] = rep.clan_variables;

  Json results = Json::object();
  for (const auto& sr : rep.strategies) results[to_string(sr.strategy)] = strategy_report_json(sr, rep.config.run_gates);
  j["results"] = results;

  Json splits = Json::array();
  for (const auto& r : rep.splits) splits.push_back(split_json(r, rep));
  j["per_split"] = splits;
  return j;
}

std::string report_json_text(const Report& rep) { return report_to_json(rep).dump(2) + "\n"; }

namespace {

void csv_row(std::ostringstream& os, const std::string& section, const std::string& name, const VeinSummary& v) {
  auto num = [](double x) { return format_number(x); };
  const bool inv = v.ci_inversion && !v.ci_inversion->empty();
  os << section << ',' << csv_escape(name) << ',' << num(v.point) << ',' << num(v.ci_lu.lo) << ','
     << num(v.ci_lu.hi) << ',' << (inv ? num(v.ci_inversion->lo) : "") << ','
     << (inv ? num(v.ci_inversion->hi) : "") << ',' << num(v.p_adjusted) << '\n';
}

}  // namespace

std::string summary_csv(const Report& rep) {
  std::ostringstream os;
  os << "section,parameter,estimate,ci_lo,ci_hi,inv_lo,inv_hi,p_adjusted\n";
  const StrategyReport& sr = rep.primary();
  csv_row(os, "BLP", "ATE (beta1)", sr.beta1);
  csv_row(os, "BLP", "HET (beta2)", sr.beta2);
  for (std::size_t k = 0; k < sr.gamma.size(); ++k) csv_row(os, "GATES", "gamma" + std::to_string(k + 1), sr.gamma[k]);
  if (sr.gap) csv_row(os, "GATES", "gamma" + std::to_string(sr.gamma.size()) + "-gamma1", *sr.gap);
  for (const auto& c : sr.clan) {
    csv_row(os, "CLAN", c.name + ": most affected", c.deltaK);
    csv_row(os, "CLAN", c.name + ": least affected", c.delta1);
    csv_row(os, "CLAN", c.name + ": difference", c.diff);
  }
  return os.str();
}

std::string gates_band_csv(const Report& rep) {
  std::ostringstream os;
  os << "strategy,group,estimate,band_lo,band_hi,ci_lo,ci_hi\n";
  for (const auto& sr : rep.strategies)
    for (std::size_t k = 0; k < sr.band.size(); ++k) {
      const BandRow& b = sr.band[k];
      os << to_string(sr.strategy) << ',' << b.group << ',' << format_number(b.point) << ','
         << format_number(b.lo) << ',' << format_number(b.hi) << ',' << format_number(sr.gamma[k].ci_lu.lo)
         << ',' << format_number(sr.gamma[k].ci_lu.hi) << '\n';
    }
  return os.str();
}

std::string gates_svg(const Report& rep) {
  const StrategyReport& sr = rep.primary();
  const double W = 640, H = 420, left = 70, right = 20, top = 40, bottom = 50;
  double lo = std::min(sr.beta1.ci_lu.lo, sr.beta1.point), hi = std::max(sr.beta1.ci_lu.hi, sr.beta1.point);
  for (const auto& b : sr.band) {
    lo = std::min({lo, b.lo, b.point});
    hi = std::max({hi, b.hi, b.point});
  }
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  if (!(hi > lo)) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const std::size_t K = sr.band.size();
  auto x_of = [&](std::size_t k) { return left + (W - left - right) * (static_cast<double>(k) + 0.5) / static_cast<double>(K); };
  auto y_of = [&](double v) { return top + (H - top - bottom) * (hi - v) / (hi - lo); };
  char buf[256];
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n", W, H);
  os << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const int level = static_cast<int>(std::lround(100.0 * (1.0 - 2.0 * rep.config.alpha)));
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">"
                "GATES with %d%% joint band (%s)</text>\n",
                W / 2, level, to_string(sr.strategy).c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left,
                top, left, H - bottom);
  os << buf;
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">%.3g</text>\n",
                  left - 6, y_of(v) + 4, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#999\"/>\n", left,
                y_of(0.0), W - right, y_of(0.0));
  os << buf;
  // ATE and its interval.
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"#d6e4f5\" opacity=\"0.6\"/>\n", left,
                y_of(sr.beta1.ci_lu.hi), W - right - left, std::max(0.0, y_of(sr.beta1.ci_lu.lo) - y_of(sr.beta1.ci_lu.hi)));
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#1f5fa8\" stroke-dasharray=\"6 4\"/>\n",
                left, y_of(sr.beta1.point), W - right, y_of(sr.beta1.point));
  os << buf;
  for (std::size_t k = 0; k < K; ++k) {
    const BandRow& b = sr.band[k];
    const double x = x_of(k);
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#b22222\" stroke-width=\"2\"/>\n",
                  x, y_of(b.lo), x, y_of(b.hi));
    os << buf;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" fill=\"black\"/>\n", x, y_of(b.point));
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">G%zu</text>\n",
                  x, H - bottom + 18, k + 1);
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(const Report& rep, const std::string& dir, bool plot) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& text) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw ConfigError("cannot write " + path.string());
  };
  write("report.json", report_json_text(rep));
  write("summary.csv", summary_csv(rep));
  if (rep.config.run_gates) {
    write("gates_band.csv", gates_band_csv(rep));
    if (plot) write("gates.svg", gates_svg(rep));
  }
}

}  // namespace hetfx
