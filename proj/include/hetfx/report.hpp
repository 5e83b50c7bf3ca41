#pragma once

#include <string>

#include <json.hpp>

#include "hetfx/pipeline.hpp"

namespace hetfx {

using Json = nlohmann::ordered_json;

// Canonical JSON form of a run configuration. Output location, thread count
// and plotting are left out so they do not affect the config hash.
Json config_to_json(const RunConfig& cfg);
// Reads the keys present in `j` on top of `base`. Unknown keys are errors.
RunConfig config_from_json(const Json& j, RunConfig base = {});
std::string config_hash(const RunConfig& cfg);

Json learner_to_json(const LearnerSpec& spec);
LearnerSpec learner_from_json(const Json& j);

Json vein_to_json(const VeinSummary& v);
Json report_to_json(const Report& rep);

std::string report_json_text(const Report& rep);
std::string summary_csv(const Report& rep);
std::string gates_band_csv(const Report& rep);
std::string gates_svg(const Report& rep);

// Writes report.json, summary.csv, gates_band.csv (when GATES ran) and,
// with `plot`, gates.svg into `dir`, creating it if needed.
void emit_report(const Report& rep, const std::string& dir, bool plot);

// Shortest round-trip decimal form.
std::string format_number(double x);

}  // namespace hetfx
