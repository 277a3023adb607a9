// deconf: causal effect estimation for interval-valued policies on panel
// outcomes over a unit network, with classical baselines and a synthetic
// ground-truth benchmark.

#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "deconf/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"deconf: panel causal effect estimation over unit networks"};
  app.require_subcommand(1);

  deconf::IngestOptions ingest;
  CLI::App* cmd_ingest = app.add_subcommand("ingest", "assemble a dataset bundle from raw CSVs");
  cmd_ingest->add_option("--units", ingest.units_path, "units CSV: unit,state")->required();
  cmd_ingest->add_option("--policies", ingest.policies_path,
                         "policies CSV: unit_or_state,level,policy_type,start_date,end_date")
      ->required();
  cmd_ingest->add_option("--cases", ingest.cases_path,
                         "cases CSV: unit,date,confirmed_cumulative,deaths_cumulative")
      ->required();
  cmd_ingest->add_option("--trends", ingest.trends_path,
                         "trends CSV: unit,date,keyword,popularity")
      ->required();
  cmd_ingest->add_option("--distance-edges", ingest.distance_edges_path,
                         "distance CSV: unit_i,unit_j,distance_km")
      ->required();
  cmd_ingest->add_option("--mobility", ingest.mobility_path,
                         "mobility CSV: unit_i,unit_j,date,flow");
  cmd_ingest->add_option("--category-map", ingest.category_map_path,
                         "policy_type = category mapping file");
  cmd_ingest->add_option("--out", ingest.out_dir, "output bundle directory")->required();
  cmd_ingest->add_option("--start", ingest.start_date, "window start (YYYY-MM-DD)");
  cmd_ingest->add_option("--end", ingest.end_date, "window end (YYYY-MM-DD)");
  cmd_ingest->add_option("--period-days", ingest.period_days, "period length in days");
  cmd_ingest->add_option("--tau-km", ingest.distance_threshold_km, "distance threshold");
  cmd_ingest->add_option("--mobility-norm", ingest.mobility_normalization,
                         "per_period or global log-flow normalization");
  cmd_ingest->add_option("--min-adoption", ingest.min_adoption_fraction,
                         "drop policy types adopted by fewer counties");
  cmd_ingest->add_option("--coverage", ingest.coverage_threshold,
                         "fraction of period days for a treated period");
  cmd_ingest->add_option("--outcome-mode", ingest.outcome_mode, "cumulative or incident");
  cmd_ingest->add_flag("--strict", ingest.strict, "fail on any row error");
  cmd_ingest->add_option("--dependency-report", ingest.dependency_report_path,
                         "write the correlation-vs-distance/flow decile table");

  deconf::SynthCommandOptions synth;
  std::string synth_policies;
  CLI::App* cmd_synth = app.add_subcommand("synth", "generate a ground-truth benchmark bundle");
  cmd_synth->add_option("--out", synth.out_dir, "output directory")->required();
  cmd_synth->add_option("--n", synth.config.n, "units");
  cmd_synth->add_option("--periods", synth.config.periods, "periods");
  cmd_synth->add_option("--dx", synth.config.d_x, "covariate dims");
  cmd_synth->add_option("--dz", synth.config.d_z, "latent confounder dims");
  cmd_synth->add_option("--rho", synth.config.rho, "confounder autoregression");
  cmd_synth->add_option("--gamma", synth.config.gamma, "neighbor mixing");
  cmd_synth->add_option("--kappa", synth.config.kappa, "treatment confounding strength");
  cmd_synth->add_option("--seed", synth.config.seed, "generator seed");
  cmd_synth->add_option("--policies", synth_policies,
                        "comma-separated name:tau pairs, e.g. lockdown:10,reopen:-10");
  cmd_synth->add_flag("--heterogeneous", synth.config.heterogeneous_effects,
                      "unit-heterogeneous effects");
  cmd_synth->add_option("--radius-km", synth.config.radius_km, "geometric graph radius");
  cmd_synth->add_option("--side-km", synth.config.square_side_km, "unit square side");
  cmd_synth->add_option("--start", synth.config.start_date, "first period start date");
  cmd_synth->add_option("--period-days", synth.config.period_days, "period length");

  deconf::RunOptions run;
  std::string run_seeds = "1";
  std::string run_ablation = "full";
  std::string run_config_path;
  CLI::App* cmd_run = app.add_subcommand("run", "train the estimator and emit effect estimates");
  cmd_run->add_option("--bundle", run.bundle_dir, "dataset bundle directory")->required();
  cmd_run->add_option("--out", run.out_dir, "output directory")->required();
  cmd_run->add_option("--config", run_config_path,
                      "key = value config file; explicit flags override it");
  cmd_run->add_option("--policy", run.policy, "policy type or category selector");
  cmd_run->add_option("--outcome", run.outcome, "confirmed or deaths");
  cmd_run->add_option("--graph", run.graph, "distance or mobility");
  cmd_run->add_option("--seeds", run_seeds, "comma-separated seed list");
  cmd_run->add_option("--lr", run.train.learning_rate, "learning rate");
  cmd_run->add_option("--epochs", run.train.epochs, "training epochs");
  cmd_run->add_option("--alpha", run.train.alpha, "treatment loss weight");
  cmd_run->add_option("--beta", run.train.beta, "balancing loss weight");
  cmd_run->add_option("--lambda", run.train.lambda, "L2 weight");
  cmd_run->add_option("--dh", run.train.d_h, "memory width");
  cmd_run->add_option("--dz", run.train.d_z, "representation width");
  cmd_run->add_option("--ablation", run_ablation, "full, no_graph or no_temporal");

  deconf::BaselinesOptions baselines;
  CLI::App* cmd_baselines = app.add_subcommand("baselines", "run naive/regression/DID estimators");
  cmd_baselines->add_option("--bundle", baselines.bundle_dir, "dataset bundle")->required();
  cmd_baselines->add_option("--out", baselines.out_dir, "output directory")->required();
  cmd_baselines->add_option("--policy", baselines.policy, "policy selector")->required();
  cmd_baselines->add_option("--outcome", baselines.outcome, "confirmed or deaths");
  cmd_baselines->add_option("--split-seed", baselines.split_seed, "unit split seed");

  deconf::ReportOptions report;
  CLI::App* cmd_report = app.add_subcommand("report", "emit plot-ready figure data from runs");
  cmd_report->add_option("--runs", report.run_dirs, "run output directories")->required();
  cmd_report->add_option("--baselines", report.baselines_dir, "baselines output directory");
  cmd_report->add_option("--out", report.out_dir, "report directory")->required();

  CLI::App* cmd_check = app.add_subcommand("check", "gradient and oracle self-tests");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(cmd_ingest)) return deconf::cmd_ingest(ingest);
    if (app.got_subcommand(cmd_synth)) {
      if (!synth_policies.empty()) {
        synth.config.policies.clear();
        std::string item;
        std::stringstream ss(synth_policies);
        while (std::getline(ss, item, ',')) {
          const auto colon = item.find(':');
          deconf::SynthPolicy p;
          if (colon == std::string::npos) {
            p.name = item;
          } else {
            p.name = item.substr(0, colon);
            p.tau = std::stod(item.substr(colon + 1));
          }
          synth.config.policies.push_back(p);
        }
      }
      return deconf::cmd_synth(synth);
    }
    if (app.got_subcommand(cmd_run)) {
      run.seeds.clear();
      std::string item;
      std::stringstream ss(run_seeds);
      while (std::getline(ss, item, ',')) run.seeds.push_back(std::stoull(item));
      run.train.ablation = deconf::parse_ablation(run_ablation);
      if (!run_config_path.empty()) {
        std::set<std::string> overridden;
        const std::pair<const char*, const char*> flag_keys[] = {
            {"--policy", "policy"},   {"--outcome", "outcome"}, {"--graph", "graph"},
            {"--seeds", "seeds"},     {"--lr", "learning_rate"}, {"--epochs", "epochs"},
            {"--alpha", "alpha"},     {"--beta", "beta"},       {"--lambda", "lambda"},
            {"--dh", "d_h"},          {"--dz", "d_z"},          {"--ablation", "ablation"}};
        for (const auto& [flag, key] : flag_keys)
          if (cmd_run->count(flag) > 0) overridden.insert(key);
        deconf::apply_run_config(deconf::read_config_file(run_config_path), overridden, run);
      }
      if (run.policy.empty()) {
        std::cerr << "error: --policy (or a config file with a policy) is required\n";
        return deconf::kFailure;
      }
      run.train.graph_kind =
          run.graph == "mobility" ? deconf::GraphKind::mobility : deconf::GraphKind::distance;
      return deconf::cmd_run(run);
    }
    if (app.got_subcommand(cmd_baselines)) return deconf::cmd_baselines(baselines);
    if (app.got_subcommand(cmd_report)) return deconf::cmd_report(report);
    if (app.got_subcommand(cmd_check)) return deconf::cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return deconf::kFailure;
  }
  return deconf::kFailure;
}
