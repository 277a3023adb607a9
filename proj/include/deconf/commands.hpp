#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "deconf/estimator.hpp"
#include "deconf/graph.hpp"
#include "deconf/panel.hpp"
#include "deconf/synth.hpp"

namespace deconf {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kSchemaExit = 2,   // malformed inputs / schema violations
  kNumericExit = 3,  // numeric failures (non-finite loss, singular systems)
  kMissingExit = 4,  // missing files or artifacts
};

struct IngestOptions {
  std::string units_path;
  std::string policies_path;
  std::string cases_path;
  std::string trends_path;
  std::string distance_edges_path;
  std::string mobility_path;      // optional
  std::string category_map_path;  // optional, defaults shipped with the tool
  std::string out_dir;
  std::string start_date;  // empty: derived from the cases file
  std::string end_date;
  int period_days = 15;
  double distance_threshold_km = 100.0;
  std::string mobility_normalization = "per_period";  // or "global"
  double min_adoption_fraction = 0.10;
  double coverage_threshold = 0.5;
  std::string outcome_mode = "cumulative";  // or "incident"
  bool strict = false;                      // row errors fail the command
  std::string dependency_report_path;       // optional analysis output
};

struct SynthCommandOptions {
  SynthConfig config;
  std::string out_dir;
};

struct RunOptions {
  std::string bundle_dir;
  std::string out_dir;
  std::string policy;  // type or category selector
  std::string outcome = "confirmed";
  std::string graph = "distance";
  std::vector<std::uint64_t> seeds = {1};
  TrainConfig train;
};

struct BaselinesOptions {
  std::string bundle_dir;
  std::string out_dir;
  std::string policy;
  std::string outcome = "confirmed";
  std::uint64_t split_seed = 1;
  bool use_split = true;  // fit the regression on train units, score on test
};

struct ReportOptions {
  std::vector<std::string> run_dirs;
  std::string baselines_dir;  // optional
  std::string out_dir;
};

int cmd_ingest(const IngestOptions& options);
int cmd_synth(const SynthCommandOptions& options);
int cmd_run(const RunOptions& options);
int cmd_baselines(const BaselinesOptions& options);
int cmd_report(const ReportOptions& options);
/// Gradient and oracle self-tests; prints one line per check.
int cmd_check();

// Plain-text `key = value` run configuration ('#' starts a comment).
// Command-line flags override file values, file values override built-in
// defaults. cmd_run echoes its effective settings in this format, and
// re-reading the echo reproduces them exactly.
std::map<std::string, std::string> read_config_file(const std::string& path);
std::string canonical_config(const std::map<std::string, std::string>& entries);
std::map<std::string, std::string> run_options_to_config(const RunOptions& options);
/// Applies file values for every key not in `overridden`.
void apply_run_config(const std::map<std::string, std::string>& config,
                      const std::set<std::string>& overridden, RunOptions& options);

// Bundle persistence shared by the commands and the tests.
struct DatasetBundle {
  PanelDataset panel;
  TemporalGraph distance_graph;
  TemporalGraph mobility_graph;  // empty unit list when absent
  bool has_mobility = false;
};

void save_bundle(const DatasetBundle& bundle, const std::string& directory);
DatasetBundle load_bundle(const std::string& directory);

}  // namespace deconf
