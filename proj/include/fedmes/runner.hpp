#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedmes/federation.hpp"

namespace fedmes {

// A grid of experiments: the plan template is stamped with every
// (method, seed) combination. Each seed also reseeds the data stream.
struct RunConfig {
    ExperimentPlan plan;  // method and master_seed fields are overwritten per cell
    std::vector<Method> methods{Method::kFedMeS};
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "out";
    bool emit_curves = false;
};

std::string method_name(Method m);
Method method_from_name(const std::string& name);

// Strict parse: unknown keys anywhere are rejected, missing keys fall back
// to the documented defaults. Throws config_error with the offending key.
RunConfig parse_config_json(const nlohmann::json& j);
RunConfig parse_config(const std::string& path);

// Inverse of parse_config_json for the keys it understands.
nlohmann::json to_json(const RunConfig& config);

// Aggregate of one method across seeds.
struct SummaryRow {
    std::string method;
    double acc_all_mean = 0.0;
    double acc_all_std = 0.0;
    double fr_mean = 0.0;
    double fr_std = 0.0;
};

// Executes the grid. Writes, per cell, <out>/<method>/seed<s>/metrics.json
// and accuracy_tensor.csv, plus <out>/summary.csv over all methods (and
// per-method curves.csv when emit_curves is set). A failing cell is reported
// and skipped; the return value is 0 only if every cell succeeded, 2
// otherwise. Partial results stay on disk.
int run(const RunConfig& config, std::ostream& log);

// Reads summary.csv files and prints a side-by-side Acc/FR table with deltas
// against the first file. Returns 0, or throws on unreadable input.
int compare(const std::vector<std::string>& summary_paths, std::ostream& out);

// Generates a stream from a StreamSpec JSON file and exports it as CSV.
int gen_data(const std::string& spec_path, const std::string& out_csv, std::ostream& log);

// Exposed for tests: summary parsing and the per-run serialization.
std::vector<SummaryRow> read_summary_csv(const std::string& path);
nlohmann::json metrics_to_json(const MetricsReport& report, Method method, std::uint64_t seed);

}  // namespace fedmes
