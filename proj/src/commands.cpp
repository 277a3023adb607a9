#include "deconf/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "deconf/baselines.hpp"
#include "deconf/csv.hpp"
#include "deconf/error.hpp"
#include "deconf/gradcheck.hpp"
#include "deconf/rng.hpp"

namespace deconf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const std::string& path) {
  if (path.empty() || !fs::exists(path))
    throw IngestError("missing input file '" + path + "'");
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const json& j) {
  return Matrix(j.at("rows").get<int>(), j.at("cols").get<int>(),
                j.at("data").get<std::vector<double>>());
}

json sparse_adjacency(const Matrix& a) {
  json entries = json::array();
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (a(i, j) != 0.0) entries.push_back({i, j, a(i, j)});
  return entries;
}

Matrix dense_adjacency(const json& entries, int n) {
  Matrix a(n, n);
  for (const auto& e : entries) {
    const int i = e.at(0).get<int>();
    const int j = e.at(1).get<int>();
    const double w = e.at(2).get<double>();
    a(i, j) = w;
    a(j, i) = w;
  }
  return a;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

OutcomeKind parse_outcome_kind(const std::string& s) {
  if (s == "confirmed") return OutcomeKind::confirmed;
  if (s == "deaths") return OutcomeKind::deaths;
  throw ConfigError("unknown outcome kind '" + s + "', expected confirmed or deaths");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return kSchemaExit;
  if (dynamic_cast<const NumericError*>(&e)) return kNumericExit;
  if (dynamic_cast<const IngestError*>(&e)) {
    const std::string what = e.what();
    return what.find("missing input") != std::string::npos ||
                   what.find("cannot open") != std::string::npos
               ? kMissingExit
               : kSchemaExit;
  }
  if (dynamic_cast<const ConfigError*>(&e)) return kFailure;
  if (dynamic_cast<const DataError*>(&e)) return kSchemaExit;
  if (dynamic_cast<const DimensionError*>(&e)) return kNumericExit;
  return kFailure;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Bundle persistence.

void save_bundle(const DatasetBundle& bundle, const std::string& directory) {
  fs::create_directories(directory);
  const PanelDataset& p = bundle.panel;

  json j;
  j["format"] = "deconf-bundle";
  j["version"] = 1;
  j["start_date"] = format_date(p.calendar.start());
  j["period_days"] = p.calendar.period_days();
  j["periods"] = p.calendar.periods();
  j["units"] = p.unit_ids;
  j["covariate_names"] = p.covariate_names;
  json x = json::array();
  for (const Matrix& m : p.covariates) x.push_back(matrix_to_json(m));
  j["x"] = std::move(x);
  j["y_confirmed"] = matrix_to_json(p.y_confirmed);
  j["y_deaths"] = matrix_to_json(p.y_deaths);
  j["outcome_mode"] = p.outcome_mode == OutcomeMode::cumulative ? "cumulative" : "incident";
  j["final_cumulative_confirmed"] = p.final_cumulative_confirmed;
  json types, cats;
  for (const auto& [name, m] : p.type_treatments) types[name] = matrix_to_json(m);
  for (const auto& [name, m] : p.category_treatments) cats[name] = matrix_to_json(m);
  j["type_treatments"] = std::move(types);
  j["category_treatments"] = std::move(cats);
  j["policy_category"] = p.policy_category;

  std::ofstream out(directory + "/panel.json", std::ios::binary);
  if (!out) throw IngestError("cannot write '" + directory + "/panel.json'");
  out << j.dump() << '\n';

  auto write_graph = [&](const TemporalGraph& g, const std::string& path) {
    json gj;
    gj["format"] = "deconf-graph";
    gj["version"] = 1;
    gj["kind"] = g.kind == GraphKind::distance ? "distance" : "mobility";
    gj["is_static"] = g.is_static;
    gj["units"] = g.unit_ids;
    json adj = json::array();
    for (const Matrix& a : g.adjacency) adj.push_back(sparse_adjacency(a));
    gj["adjacency"] = std::move(adj);
    std::ofstream gout(path, std::ios::binary);
    if (!gout) throw IngestError("cannot write '" + path + "'");
    gout << gj.dump() << '\n';
  };
  write_graph(bundle.distance_graph, directory + "/graph_distance.json");
  if (bundle.has_mobility) write_graph(bundle.mobility_graph, directory + "/graph_mobility.json");
}

namespace {

TemporalGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open '" + path + "'");
  json j;
  in >> j;
  if (j.value("format", "") != "deconf-graph") throw SchemaError(path + ": not a graph file");
  TemporalGraph g;
  g.kind = j.at("kind").get<std::string>() == "mobility" ? GraphKind::mobility : GraphKind::distance;
  g.is_static = j.at("is_static").get<bool>();
  g.unit_ids = j.at("units").get<std::vector<std::string>>();
  for (const auto& adj : j.at("adjacency")) {
    Matrix a = dense_adjacency(adj, g.n());
    g.renormalized.push_back(renormalize(a));
    g.adjacency.push_back(std::move(a));
  }
  return g;
}

}  // namespace

DatasetBundle load_bundle(const std::string& directory) {
  const std::string panel_path = directory + "/panel.json";
  if (!fs::exists(panel_path)) throw IngestError("missing input file '" + panel_path + "'");
  std::ifstream in(panel_path, std::ios::binary);
  json j;
  in >> j;
  if (j.value("format", "") != "deconf-bundle")
    throw SchemaError(panel_path + ": not a dataset bundle");

  DatasetBundle b;
  PanelDataset& p = b.panel;
  p.unit_ids = j.at("units").get<std::vector<std::string>>();
  p.calendar = PeriodCalendar(parse_date(j.at("start_date").get<std::string>()),
                              j.at("period_days").get<int>(), j.at("periods").get<int>());
  p.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
  for (const auto& m : j.at("x")) p.covariates.push_back(matrix_from_json(m));
  p.y_confirmed = matrix_from_json(j.at("y_confirmed"));
  p.y_deaths = matrix_from_json(j.at("y_deaths"));
  p.outcome_mode = j.at("outcome_mode").get<std::string>() == "incident" ? OutcomeMode::incident
                                                                          : OutcomeMode::cumulative;
  p.final_cumulative_confirmed = j.at("final_cumulative_confirmed").get<std::vector<double>>();
  for (const auto& [name, m] : j.at("type_treatments").items())
    p.type_treatments[name] = matrix_from_json(m);
  for (const auto& [name, m] : j.at("category_treatments").items())
    p.category_treatments[name] = matrix_from_json(m);
  p.policy_category = j.at("policy_category").get<std::map<std::string, std::string>>();
  p.validate();

  b.distance_graph = load_graph(directory + "/graph_distance.json");
  const std::string mob_path = directory + "/graph_mobility.json";
  if (fs::exists(mob_path)) {
    b.mobility_graph = load_graph(mob_path);
    b.has_mobility = true;
  }
  return b;
}

// ---------------------------------------------------------------------------
// ingest

namespace {

json row_errors_json(const std::vector<RowError>& errors) {
  json out = json::array();
  for (const RowError& e : errors)
    out.push_back({{"file", e.file}, {"line", e.line}, {"message", e.message}});
  return out;
}

}  // namespace

int cmd_ingest(const IngestOptions& opt) {
  return guarded([&]() -> int {
    require_file(opt.units_path);
    require_file(opt.policies_path);
    require_file(opt.cases_path);
    require_file(opt.trends_path);
    require_file(opt.distance_edges_path);
    if (!opt.mobility_path.empty()) require_file(opt.mobility_path);
    if (!opt.category_map_path.empty()) require_file(opt.category_map_path);

    const CsvTable units_csv = CsvTable::read_file(opt.units_path);
    const CsvTable cases_csv = CsvTable::read_file(opt.cases_path);
    const CsvTable trends_csv = CsvTable::read_file(opt.trends_path);
    const CsvTable policies_csv = CsvTable::read_file(opt.policies_path);
    const CsvTable edges_csv = CsvTable::read_file(opt.distance_edges_path);

    UnitRoster roster = UnitRoster::from_csv(units_csv);

    // calendar: explicit flags win, otherwise the cases file sets the window
    Date start, end;
    if (!opt.start_date.empty() && !opt.end_date.empty()) {
      start = parse_date(opt.start_date);
      end = parse_date(opt.end_date);
    } else {
      const int c_date = cases_csv.column("date");
      if (cases_csv.row_count() == 0) throw SchemaError(opt.cases_path + ": no data rows");
      start = Date{INT32_MAX};
      end = Date{INT32_MIN};
      for (int i = 0; i < cases_csv.row_count(); ++i) {
        try {
          const Date d = parse_date(cases_csv.cell(i, c_date));
          start = std::min(start, d);
          end = std::max(end, d);
        } catch (const DataError&) {
          // malformed dates are reported by the outcome pass
        }
      }
      if (end < start) throw SchemaError(opt.cases_path + ": no parseable dates");
    }
    const PeriodCalendar calendar = PeriodCalendar::covering(start, end, opt.period_days);
    if (calendar.periods() == 0)
      throw DataError("window shorter than one period of " + std::to_string(opt.period_days) +
                      " days");

    const OutcomeMode mode =
        opt.outcome_mode == "incident" ? OutcomeMode::incident : OutcomeMode::cumulative;
    OutcomeTables outcomes = aggregate_outcomes(cases_csv, roster.units, calendar, mode);

    // counties without any outcome data leave the study entirely
    UnitRoster kept;
    for (const std::string& u : outcomes.units) {
      kept.units.push_back(u);
      const std::string& st = roster.unit_state.at(u);
      kept.unit_state[u] = st;
      kept.state_units[st].push_back(u);
    }

    CovariateTable covariates = aggregate_covariates(trends_csv, kept.units, calendar);

    const CategoryMap categories = opt.category_map_path.empty()
                                       ? CategoryMap::defaults()
                                       : CategoryMap::read_file(opt.category_map_path);
    PolicyIngestResult policies = ingest_policies(policies_csv, kept, categories);
    const std::vector<std::string> survivors =
        filter_policies(policies.records, kept, opt.min_adoption_fraction);
    const std::set<std::string> survivor_set(survivors.begin(), survivors.end());

    DatasetBundle bundle;
    PanelDataset& panel = bundle.panel;
    panel.unit_ids = kept.units;
    panel.calendar = calendar;
    panel.covariates = covariates.x;
    panel.covariate_names = covariates.keywords;
    panel.y_confirmed = std::move(outcomes.confirmed);
    panel.y_deaths = std::move(outcomes.deaths);
    panel.outcome_mode = mode;
    panel.final_cumulative_confirmed = std::move(outcomes.final_cumulative_confirmed);

    std::map<std::string, std::vector<PolicyRecord>> by_type;
    std::map<std::string, std::vector<PolicyRecord>> by_category;
    for (const PolicyRecord& r : policies.records) {
      if (!survivor_set.count(r.policy_type)) continue;
      by_type[r.policy_type].push_back(r);
      if (!r.category.empty()) by_category[r.category].push_back(r);
    }
    for (const auto& [type, records] : by_type) {
      panel.type_treatments[type] =
          binarize_treatment(records, kept.units, calendar, opt.coverage_threshold);
      panel.policy_category[type] = categories.categorize(type);
    }
    for (const auto& [cat, records] : by_category)
      panel.category_treatments[cat] =
          binarize_treatment(records, kept.units, calendar, opt.coverage_threshold);

    // distance graph over the kept units; edges touching dropped counties are
    // skipped, unknown ids are hard errors
    std::set<std::string> kept_set(kept.units.begin(), kept.units.end());
    std::vector<DistanceEdge> edges;
    int skipped_edges = 0;
    {
      const int ci = edges_csv.column("unit_i");
      const int cj = edges_csv.column("unit_j");
      const int cd = edges_csv.column("distance_km");
      for (int i = 0; i < edges_csv.row_count(); ++i) {
        const std::string& a = edges_csv.cell(i, ci);
        const std::string& b = edges_csv.cell(i, cj);
        if (!roster.has_unit(a) || !roster.has_unit(b))
          throw IngestError(opt.distance_edges_path + ": line " +
                            std::to_string(edges_csv.line_number(i)) + ": unknown unit id '" +
                            (!roster.has_unit(a) ? a : b) + "'");
        if (!kept_set.count(a) || !kept_set.count(b)) {
          ++skipped_edges;
          continue;
        }
        edges.push_back(DistanceEdge{a, b, parse_double(edges_csv.cell(i, cd))});
      }
    }
    GraphBuildConfig gc;
    gc.kind = GraphKind::distance;
    gc.distance_threshold_km = opt.distance_threshold_km;
    bundle.distance_graph = build_distance_graph(edges, kept.units, gc);

    if (!opt.mobility_path.empty()) {
      const CsvTable mob_csv = CsvTable::read_file(opt.mobility_path);
      const int ci = mob_csv.column("unit_i");
      const int cj = mob_csv.column("unit_j");
      const int cd = mob_csv.column("date");
      const int cf = mob_csv.column("flow");
      // daily volumes summed into periods
      std::map<std::tuple<std::string, std::string, int>, double> sums;
      for (int i = 0; i < mob_csv.row_count(); ++i) {
        const std::string& a = mob_csv.cell(i, ci);
        const std::string& b = mob_csv.cell(i, cj);
        if (!kept_set.count(a) || !kept_set.count(b)) {
          ++skipped_edges;
          continue;
        }
        const int t = calendar.period_of(parse_date(mob_csv.cell(i, cd)));
        if (t < 0) continue;
        sums[{a, b, t}] += parse_double(mob_csv.cell(i, cf));
      }
      std::vector<MobilityFlow> flows;
      flows.reserve(sums.size());
      for (const auto& [key, volume] : sums)
        flows.push_back(
            MobilityFlow{std::get<0>(key), std::get<1>(key), std::get<2>(key), volume});
      GraphBuildConfig mc;
      mc.kind = GraphKind::mobility;
      mc.mobility_normalization = opt.mobility_normalization == "global"
                                      ? MobilityNormalization::global
                                      : MobilityNormalization::per_period;
      bundle.mobility_graph = build_mobility_graph(flows, kept.units, calendar.periods(), mc);
      bundle.has_mobility = true;
    }

    panel.validate();
    save_bundle(bundle, opt.out_dir);

    // validation report
    json report;
    report["generated_at"] = timestamp();
    report["units_total"] = roster.units.size();
    report["units_kept"] = kept.units.size();
    report["units_dropped"] = outcomes.dropped_units;
    report["clamped_cumulative_values"] = outcomes.clamped_values;
    report["covariate_keywords"] = covariates.keywords;
    report["covariate_missing_series"] = covariates.missing_series;
    report["policy_rows_skipped_out_of_roster"] = policies.skipped_out_of_roster;
    report["skipped_graph_edges"] = skipped_edges;
    report["periods"] = calendar.periods();
    report["window"] = {format_date(calendar.start()), format_date(calendar.end())};
    std::set<std::string> seen_types;
    for (const PolicyRecord& r : policies.records) seen_types.insert(r.policy_type);
    report["policy_types_seen"] = seen_types;
    report["policy_types_surviving"] = survivors;
    json errors = row_errors_json(policies.errors);
    for (const auto& e : row_errors_json(outcomes.errors)) errors.push_back(e);
    for (const auto& e : row_errors_json(covariates.errors)) errors.push_back(e);
    report["row_errors"] = errors;
    {
      std::ofstream out(opt.out_dir + "/ingest_report.json", std::ios::binary);
      out << report.dump(2) << '\n';
    }

    if (!opt.dependency_report_path.empty()) {
      const DependencyReport dep = pearson_dependency_report(
          panel, &bundle.distance_graph, bundle.has_mobility ? &bundle.mobility_graph : nullptr);
      CsvWriter w({"bucket", "mean_outcome_corr", "mean_covariate_corr", "mean_distance_km",
                   "mean_flow_weight", "pairs"});
      for (int i = 0; i < static_cast<int>(dep.buckets.size()); ++i) {
        const DependencyBucket& b = dep.buckets[static_cast<std::size_t>(i)];
        w.add_row({std::to_string(i), CsvWriter::format(b.mean_outcome_corr),
                   CsvWriter::format(b.mean_covariate_corr), CsvWriter::format(b.mean_distance_km),
                   CsvWriter::format(b.mean_flow_weight), std::to_string(b.pairs)});
      }
      w.write_file(opt.dependency_report_path);
    }

    const std::size_t error_count = errors.size();
    std::cerr << "ingest: kept " << kept.units.size() << "/" << roster.units.size() << " units, "
              << survivors.size() << " surviving policy types, " << error_count << " row errors\n";
    if (opt.strict && error_count > 0) return kSchemaExit;
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const SynthCommandOptions& opt) {
  return guarded([&]() -> int {
    const SynthPanel panel = generate(opt.config);
    write_synth_bundle(panel, opt.config, opt.out_dir);
    std::cerr << "synth: wrote " << opt.config.n << " units x " << opt.config.periods
              << " periods to " << opt.out_dir << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// run

namespace {

struct SeedRunResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalMetrics test_metrics;
  int best_epoch = -1;
  double best_validation_rmse = 0.0;
  std::vector<double> ate;
  std::vector<double> normalized_ite;
};

SeedRunResult run_one_seed(const RunOptions& opt, const TrainingPanel& panel,
                           const TemporalGraph& graph, std::uint64_t seed) {
  SeedRunResult result;
  result.seed = seed;
  const std::string seed_dir = opt.out_dir + "/seed_" + std::to_string(seed);
  fs::create_directories(seed_dir);

  json manifest;
  manifest["command"] = "run";
  manifest["policy"] = opt.policy;
  manifest["outcome"] = opt.outcome;
  manifest["graph"] = opt.graph;
  manifest["seed"] = seed;
  manifest["config"] = {{"learning_rate", opt.train.learning_rate},
                        {"epochs", opt.train.epochs},
                        {"alpha", opt.train.alpha},
                        {"beta", opt.train.beta},
                        {"lambda", opt.train.lambda},
                        {"d_h", opt.train.d_h},
                        {"d_z", opt.train.d_z},
                        {"d_g", opt.train.d_g},
                        {"d_o", opt.train.d_o},
                        {"ablation", ablation_name(opt.train.ablation)}};

  try {
    const SplitAssignment split = split_units(panel.n, seed);
    TrainConfig config = opt.train;
    config.seed = seed;
    const TrainResult trained = train(panel, graph, split, config);

    {
      CsvWriter w({"epoch", "l_y", "l_c", "l_b", "l2", "total", "val_rmse"});
      for (std::size_t e = 0; e < trained.history.size(); ++e) {
        const LossBreakdown& b = trained.history[e];
        w.add_row({std::to_string(e), CsvWriter::format(b.l_y), CsvWriter::format(b.l_c),
                   CsvWriter::format(b.l_b), CsvWriter::format(b.l2), CsvWriter::format(b.total),
                   CsvWriter::format(trained.validation_rmse[e])});
      }
      w.write_file(seed_dir + "/loss_history.csv");
    }

    const EffectEstimate effects = estimate_effects(trained.model, panel, graph, opt.policy);
    {
      CsvWriter w({"unit", "period", "ite", "y1_hat", "y0_hat"});
      const std::vector<PeriodPredictions> preds = forward_predictions(
          panel, graph, trained.model.transform, trained.model.params, trained.model.wiring);
      for (int u = 0; u < panel.n; ++u)
        for (int t = 0; t < panel.T; ++t) {
          const double y1 = trained.model.transform.invert(
              preds[static_cast<std::size_t>(t)].y1(u, 0));
          const double y0 = trained.model.transform.invert(
              preds[static_cast<std::size_t>(t)].y0(u, 0));
          w.add_row({panel.unit_ids[static_cast<std::size_t>(u)], std::to_string(t),
                     CsvWriter::format(effects.ite(u, t)), CsvWriter::format(y1),
                     CsvWriter::format(y0)});
        }
      w.write_file(seed_dir + "/effects.csv");
    }

    const EvalMetrics test = evaluate(trained.model, panel, graph, split.test);
    {
      CsvWriter w({"period", "rmse", "accuracy"});
      for (int t = 0; t < panel.T; ++t)
        w.add_row({std::to_string(t),
                   CsvWriter::format(test.rmse_per_period[static_cast<std::size_t>(t)]),
                   CsvWriter::format(test.accuracy_per_period[static_cast<std::size_t>(t)])});
      w.write_file(seed_dir + "/metrics.csv");
    }
    save_checkpoint(trained.model, seed_dir + "/checkpoint.json");

    result.ok = true;
    result.test_metrics = test;
    result.best_epoch = trained.best_epoch;
    result.best_validation_rmse = trained.best_validation_rmse;
    result.ate = effects.ate;
    result.normalized_ite = effects.normalized_ite;

    manifest["status"] = "ok";
    manifest["metrics"] = {{"test_rmse", test.rmse},
                           {"test_accuracy", test.accuracy},
                           {"best_epoch", trained.best_epoch},
                           {"best_validation_rmse", trained.best_validation_rmse}};
    manifest["paths"] = {{"loss_history", "loss_history.csv"},
                         {"effects", "effects.csv"},
                         {"metrics", "metrics.csv"},
                         {"checkpoint", "checkpoint.json"}};
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = e.what();
    manifest["status"] = "failed";
    manifest["error"] = e.what();
  }
  manifest["generated_at"] = timestamp();
  std::ofstream out(seed_dir + "/manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  return result;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd ms;
  if (values.empty()) return ms;
  for (double v : values) ms.mean += v;
  ms.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - ms.mean) * (v - ms.mean);
    ms.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return ms;
}

}  // namespace

int cmd_run(const RunOptions& opt) {
  return guarded([&]() -> int {
    if (opt.policy.empty()) throw ConfigError("empty policy selector");
    if (opt.seeds.empty()) throw ConfigError("at least one seed required");
    const DatasetBundle bundle = load_bundle(opt.bundle_dir);

    const TemporalGraph* graph = &bundle.distance_graph;
    if (opt.graph == "mobility") {
      if (!bundle.has_mobility) throw ConfigError("bundle has no mobility graph");
      graph = &bundle.mobility_graph;
    } else if (opt.graph != "distance") {
      throw ConfigError("unknown graph kind '" + opt.graph + "'");
    }
    const TrainingPanel panel =
        make_training_panel(bundle.panel, opt.policy, parse_outcome_kind(opt.outcome));

    fs::create_directories(opt.out_dir);
    {
      // canonical echo of the effective configuration; feeding it back via
      // --config reproduces this run exactly
      std::ofstream out(opt.out_dir + "/run_config.txt", std::ios::binary);
      out << canonical_config(run_options_to_config(opt));
    }
    std::vector<SeedRunResult> results(opt.seeds.size());

    int threads = 1;
    if (const char* env = std::getenv("DECONF_THREADS")) threads = std::max(1, std::atoi(env));
    threads = std::min<int>(threads, static_cast<int>(opt.seeds.size()));
    if (threads <= 1) {
      for (std::size_t i = 0; i < opt.seeds.size(); ++i)
        results[i] = run_one_seed(opt, panel, *graph, opt.seeds[i]);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < threads; ++w) pool.emplace_back([&, w]() {
        for (std::size_t i = static_cast<std::size_t>(w); i < opt.seeds.size();
             i += static_cast<std::size_t>(threads))
          results[i] = run_one_seed(opt, panel, *graph, opt.seeds[i]);
      });
      for (std::thread& t : pool) t.join();
    }

    // seed-averaged summary
    std::vector<double> rmses, accs;
    std::vector<std::vector<double>> ates;
    std::vector<std::vector<double>> normalized;
    json per_seed = json::array();
    for (const SeedRunResult& r : results) {
      json s;
      s["seed"] = r.seed;
      s["status"] = r.ok ? "ok" : "failed";
      if (r.ok) {
        s["test_rmse"] = r.test_metrics.rmse;
        s["test_accuracy"] = r.test_metrics.accuracy;
        s["best_epoch"] = r.best_epoch;
        rmses.push_back(r.test_metrics.rmse);
        accs.push_back(r.test_metrics.accuracy);
        ates.push_back(r.ate);
        normalized.push_back(r.normalized_ite);
      } else {
        s["error"] = r.error;
      }
      per_seed.push_back(std::move(s));
    }

    json summary;
    summary["command"] = "run";
    summary["policy"] = opt.policy;
    summary["outcome"] = opt.outcome;
    summary["graph"] = opt.graph;
    summary["ablation"] = ablation_name(opt.train.ablation);
    summary["seeds"] = opt.seeds;
    summary["per_seed"] = std::move(per_seed);
    summary["units"] = panel.unit_ids;
    const MeanStd rmse_ms = mean_std(rmses);
    const MeanStd acc_ms = mean_std(accs);
    summary["test_rmse"] = {{"mean", rmse_ms.mean}, {"std", rmse_ms.std}};
    summary["test_accuracy"] = {{"mean", acc_ms.mean}, {"std", acc_ms.std}};
    if (!ates.empty()) {
      json ate_mean = json::array(), ate_std = json::array();
      for (int t = 0; t < panel.T; ++t) {
        std::vector<double> v;
        for (const auto& a : ates) v.push_back(a[static_cast<std::size_t>(t)]);
        const MeanStd ms = mean_std(v);
        ate_mean.push_back(ms.mean);
        ate_std.push_back(ms.std);
      }
      summary["ate_mean"] = std::move(ate_mean);
      summary["ate_std"] = std::move(ate_std);

      json ni_mean = json::array(), ni_std = json::array();
      for (int u = 0; u < panel.n; ++u) {
        std::vector<double> v;
        for (const auto& a : normalized) {
          const double x = a[static_cast<std::size_t>(u)];
          if (std::isfinite(x)) v.push_back(x);
        }
        const MeanStd ms = mean_std(v);
        ni_mean.push_back(v.empty() ? json() : json(ms.mean));
        ni_std.push_back(v.empty() ? json() : json(ms.std));
      }
      summary["normalized_ite_mean"] = std::move(ni_mean);
      summary["normalized_ite_std"] = std::move(ni_std);
    }
    json periods = json::array();
    for (int t = 0; t < panel.T; ++t) {
      const PeriodRange r = bundle.panel.calendar.range(t);
      periods.push_back({format_date(r.start), format_date(r.end)});
    }
    summary["periods"] = std::move(periods);

    std::ofstream out(opt.out_dir + "/summary.json", std::ios::binary);
    out << summary.dump(2) << '\n';

    const bool all_ok = rmses.size() == opt.seeds.size();
    std::cerr << "run: " << rmses.size() << "/" << opt.seeds.size() << " seeds ok, test RMSE "
              << rmse_ms.mean << " +- " << rmse_ms.std << ", accuracy " << acc_ms.mean << "\n";
    return all_ok ? kOk : kNumericExit;
  });
}

// ---------------------------------------------------------------------------
// baselines

int cmd_baselines(const BaselinesOptions& opt) {
  return guarded([&]() -> int {
    if (opt.policy.empty()) throw ConfigError("empty policy selector");
    const DatasetBundle bundle = load_bundle(opt.bundle_dir);
    const TrainingPanel panel =
        make_training_panel(bundle.panel, opt.policy, parse_outcome_kind(opt.outcome));

    std::vector<BaselineResult> results;
    results.push_back(naive_ate(panel));
    if (opt.use_split) {
      const SplitAssignment split = split_units(panel.n, opt.split_seed);
      results.push_back(outcome_regression(panel, &split));
    } else {
      results.push_back(outcome_regression(panel, nullptr));
    }
    results.push_back(did(panel));

    fs::create_directories(opt.out_dir);
    CsvWriter w({"method", "period", "ate", "defined", "rmse"});
    for (const BaselineResult& r : results)
      for (std::size_t t = 0; t < r.ate.size(); ++t) {
        const PeriodAte& p = r.ate[t];
        w.add_row({r.method, std::to_string(p.period),
                   p.defined ? CsvWriter::format(p.ate) : "",
                   p.defined ? "1" : "0",
                   t < r.rmse_per_period.size() ? CsvWriter::format(r.rmse_per_period[t]) : ""});
      }
    w.write_file(opt.out_dir + "/baselines.csv");

    json j;
    j["command"] = "baselines";
    j["policy"] = opt.policy;
    j["outcome"] = opt.outcome;
    j["generated_at"] = timestamp();
    for (const BaselineResult& r : results) {
      json m;
      m["mean_ate"] = r.mean_defined_ate();
      if (!r.rmse_per_period.empty()) m["rmse"] = r.rmse;
      if (r.method == "did") m["membership_changes"] = r.membership_changes;
      j["methods"][r.method] = std::move(m);
    }
    std::ofstream out(opt.out_dir + "/baselines.json", std::ios::binary);
    out << j.dump(2) << '\n';
    std::cerr << "baselines: wrote " << opt.out_dir << "/baselines.csv\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const ReportOptions& opt) {
  return guarded([&]() -> int {
    if (opt.run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    fs::create_directories(opt.out_dir);

    json comparison = json::array();
    for (const std::string& dir : opt.run_dirs) {
      const std::string path = dir + "/summary.json";
      if (!fs::exists(path)) throw IngestError("missing input file '" + path + "'");
      std::ifstream in(path, std::ios::binary);
      json summary;
      in >> summary;
      const std::string policy = summary.at("policy").get<std::string>();

      {
        CsvWriter w({"period", "start", "end", "ate_mean", "ate_std"});
        const auto& mean = summary.at("ate_mean");
        const auto& stdv = summary.at("ate_std");
        const auto& periods = summary.at("periods");
        for (std::size_t t = 0; t < mean.size(); ++t)
          w.add_row({std::to_string(t), periods[t][0].get<std::string>(),
                     periods[t][1].get<std::string>(),
                     CsvWriter::format(mean[t].get<double>()),
                     CsvWriter::format(stdv[t].get<double>())});
        w.write_file(opt.out_dir + "/ate_series_" + policy + ".csv");
      }
      {
        CsvWriter w({"unit", "normalized_ite_mean", "normalized_ite_std"});
        const auto& units = summary.at("units");
        const auto& mean = summary.at("normalized_ite_mean");
        const auto& stdv = summary.at("normalized_ite_std");
        for (std::size_t u = 0; u < units.size(); ++u)
          w.add_row({units[u].get<std::string>(),
                     mean[u].is_null() ? "" : CsvWriter::format(mean[u].get<double>()),
                     stdv[u].is_null() ? "" : CsvWriter::format(stdv[u].get<double>())});
        w.write_file(opt.out_dir + "/normalized_ite_" + policy + ".csv");
      }
      comparison.push_back({{"method", "model_" + summary.at("ablation").get<std::string>()},
                            {"policy", policy},
                            {"rmse_mean", summary.at("test_rmse").at("mean").get<double>()},
                            {"rmse_std", summary.at("test_rmse").at("std").get<double>()},
                            {"accuracy_mean", summary.at("test_accuracy").at("mean").get<double>()},
                            {"accuracy_std", summary.at("test_accuracy").at("std").get<double>()}});
    }

    if (!opt.baselines_dir.empty()) {
      const std::string path = opt.baselines_dir + "/baselines.json";
      if (!fs::exists(path)) throw IngestError("missing input file '" + path + "'");
      std::ifstream in(path, std::ios::binary);
      json b;
      in >> b;
      for (const auto& [method, m] : b.at("methods").items()) {
        json row = {{"method", method}, {"policy", b.at("policy").get<std::string>()}};
        if (m.contains("rmse")) row["rmse_mean"] = m.at("rmse").get<double>();
        row["mean_ate"] = m.at("mean_ate").get<double>();
        comparison.push_back(std::move(row));
      }
    }

    CsvWriter w({"method", "policy", "rmse_mean", "rmse_std", "accuracy_mean", "accuracy_std",
                 "mean_ate"});
    for (const auto& row : comparison) {
      auto field = [&](const char* key) {
        return row.contains(key) ? CsvWriter::format(row.at(key).get<double>()) : std::string();
      };
      w.add_row({row.at("method").get<std::string>(), row.at("policy").get<std::string>(),
                 field("rmse_mean"), field("rmse_std"), field("accuracy_mean"),
                 field("accuracy_std"), field("mean_ate")});
    }
    w.write_file(opt.out_dir + "/method_comparison.csv");
    std::cerr << "report: wrote " << opt.out_dir << "\n";
    return kOk;
  });
}

// ---------------------------------------------------------------------------
// check: gradient and oracle self-tests

namespace {

double sorted_w1_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

bool check_line(const char* name, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << ": " << detail << "\n";
  return ok;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2e", v);
  return buf;
}

}  // namespace

int cmd_check() {
  return guarded([&]() -> int {
    bool all_ok = true;

    {
      // full-loss gradient check on a small panel
      SynthConfig cfg;
      cfg.n = 5;
      cfg.periods = 3;
      cfg.d_x = 3;
      cfg.d_z = 2;
      cfg.square_side_km = 300.0;
      cfg.seed = 11;
      const SynthPanel sp = generate(cfg);
      const TrainingPanel panel =
          make_training_panel(sp.dataset, "synthetic_policy", OutcomeKind::confirmed);
      std::vector<int> mask = {0, 1, 2, 3, 4};

      ModelDims dims;
      dims.d_x = panel.d_x;
      dims.d_h = 4;
      dims.d_g = 4;
      dims.d_z = 3;
      dims.d_o = 4;
      ModelParams params = ModelParams::init(dims, 3);
      const OutcomeTransform transform = OutcomeTransform::fit(panel.y, mask);
      const LossWeights weights{1.0, 1e-2, 0.01};

      CompositeOptions opts;
      opts.with_grads = false;
      auto loss_fn = [&]() {
        return composite_loss(panel, sp.graph, transform, params, weights, mask, opts)
            .breakdown.total;
      };
      auto grads_fn = [&]() {
        CompositeOptions g = opts;
        g.with_grads = true;
        GradientSet grads =
            composite_loss(panel, sp.graph, transform, params, weights, mask, g).grads;
        add_l2_gradients(grads, params, weights.lambda);
        return grads;
      };
      GradCheckConfig gc;
      gc.coords_per_tensor = 20;
      const GradCheckReport report = finite_diff_check(loss_fn, grads_fn, params.refs(), gc);
      all_ok &= check_line("gradient_check", report.max_rel_error < 1e-4,
                           "max rel err " + sci(report.max_rel_error) + " over " +
                               std::to_string(report.coords_checked) + " coords");
    }

    {
      // Sinkhorn against the sorted 1-D transport oracle
      Rng rng(5);
      double worst = 0.0;
      for (int inst = 0; inst < 10; ++inst) {
        const int m = 8 + rng.uniform_int(0, 24);
        std::vector<double> a(static_cast<std::size_t>(m)), b(static_cast<std::size_t>(m));
        const double sep = rng.uniform(1.0, 3.0);
        for (double& v : a) v = rng.normal(0.0, 0.4);
        for (double& v : b) v = sep + rng.normal(0.0, 0.4);
        Matrix z(2 * m, 1);
        Matrix c(2 * m, 1);
        std::vector<int> mask;
        for (int i = 0; i < m; ++i) {
          z(i, 0) = a[static_cast<std::size_t>(i)];
          c(i, 0) = 1.0;
          z(m + i, 0) = b[static_cast<std::size_t>(i)];
          mask.push_back(i);
          mask.push_back(m + i);
        }
        std::sort(mask.begin(), mask.end());
        const BalanceResult sink = balancing_loss(z, c, mask);
        const double oracle = sorted_w1_1d(a, b);
        worst = std::max(worst, std::abs(sink.value - oracle) / oracle);
      }
      all_ok &= check_line("sinkhorn_1d_oracle", worst < 0.02, "worst rel err " + sci(worst));
    }

    {
      // renormalization invariants
      Rng rng(7);
      double worst_sym = 0.0, worst_eig = 0.0;
      for (int inst = 0; inst < 5; ++inst) {
        const int n = 4 + rng.uniform_int(0, 12);
        Matrix a(n, n);
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (rng.uniform01() < 0.4) {
              const double w = rng.uniform(0.1, 2.0);
              a(i, j) = w;
              a(j, i) = w;
            }
        const Matrix ahat = renormalize(a);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) worst_sym = std::max(worst_sym, std::abs(ahat(i, j) - ahat(j, i)));
        // (augmented degree)^(1/2) is a unit eigenvector
        std::vector<double> d(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < n; ++i) {
          d[static_cast<std::size_t>(i)] = 1.0;
          for (int j = 0; j < n; ++j) d[static_cast<std::size_t>(i)] += a(i, j);
          d[static_cast<std::size_t>(i)] = std::sqrt(d[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < n; ++i) {
          double s = 0.0;
          for (int j = 0; j < n; ++j) s += ahat(i, j) * d[static_cast<std::size_t>(j)];
          worst_eig = std::max(worst_eig, std::abs(s - d[static_cast<std::size_t>(i)]));
        }
      }
      all_ok &= check_line("renormalization", worst_sym < 1e-12 && worst_eig < 1e-9,
                           "symmetry " + sci(worst_sym) + ", eigenpair " + sci(worst_eig));
    }

    std::cout << (all_ok ? "check: all self-tests passed\n" : "check: FAILURES\n");
    return all_ok ? kOk : kNumericExit;
  });
}

}  // namespace deconf

// ---------------------------------------------------------------------------
// run configuration files

namespace deconf {

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw SchemaError(path + ": line " + std::to_string(line_no) +
                        " is not of the form 'key = value'");
    auto trim = [](std::string s) {
      const std::size_t lo = s.find_first_not_of(" \t\r");
      if (lo == std::string::npos) return std::string();
      const std::size_t hi = s.find_last_not_of(" \t\r");
      return s.substr(lo, hi - lo + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw SchemaError(path + ": empty key at line " + std::to_string(line_no));
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string canonical_config(const std::map<std::string, std::string>& entries) {
  std::string out;
  for (const auto& [key, value] : entries) out += key + " = " + value + "\n";
  return out;
}

std::map<std::string, std::string> run_options_to_config(const RunOptions& options) {
  std::map<std::string, std::string> kv;
  kv["policy"] = options.policy;
  kv["outcome"] = options.outcome;
  kv["graph"] = options.graph;
  std::string seeds;
  for (std::size_t i = 0; i < options.seeds.size(); ++i) {
    if (i) seeds += ",";
    seeds += std::to_string(options.seeds[i]);
  }
  kv["seeds"] = seeds;
  kv["learning_rate"] = CsvWriter::format(options.train.learning_rate);
  kv["epochs"] = std::to_string(options.train.epochs);
  kv["alpha"] = CsvWriter::format(options.train.alpha);
  kv["beta"] = CsvWriter::format(options.train.beta);
  kv["lambda"] = CsvWriter::format(options.train.lambda);
  kv["d_h"] = std::to_string(options.train.d_h);
  kv["d_z"] = std::to_string(options.train.d_z);
  kv["d_g"] = std::to_string(options.train.d_g);
  kv["d_o"] = std::to_string(options.train.d_o);
  kv["ablation"] = ablation_name(options.train.ablation);
  return kv;
}

void apply_run_config(const std::map<std::string, std::string>& config,
                      const std::set<std::string>& overridden, RunOptions& options) {
  auto want = [&](const char* key) {
    return config.count(key) > 0 && overridden.count(key) == 0;
  };
  if (want("policy")) options.policy = config.at("policy");
  if (want("outcome")) options.outcome = config.at("outcome");
  if (want("graph")) options.graph = config.at("graph");
  if (want("seeds")) {
    options.seeds.clear();
    std::stringstream ss(config.at("seeds"));
    std::string item;
    while (std::getline(ss, item, ',')) options.seeds.push_back(std::stoull(item));
  }
  if (want("learning_rate")) options.train.learning_rate = parse_double(config.at("learning_rate"));
  if (want("epochs")) options.train.epochs = std::stoi(config.at("epochs"));
  if (want("alpha")) options.train.alpha = parse_double(config.at("alpha"));
  if (want("beta")) options.train.beta = parse_double(config.at("beta"));
  if (want("lambda")) options.train.lambda = parse_double(config.at("lambda"));
  if (want("d_h")) options.train.d_h = std::stoi(config.at("d_h"));
  if (want("d_z")) options.train.d_z = std::stoi(config.at("d_z"));
  if (want("d_g")) options.train.d_g = std::stoi(config.at("d_g"));
  if (want("d_o")) options.train.d_o = std::stoi(config.at("d_o"));
  if (want("ablation")) options.train.ablation = parse_ablation(config.at("ablation"));
}

}  // namespace deconf
