// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Heavy synthetic benchmarks (criteria 4-7) share one set of trained models.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "deconf/baselines.hpp"
#include "deconf/commands.hpp"
#include "deconf/estimator.hpp"
#include "deconf/gradcheck.hpp"
#include "deconf/graph.hpp"
#include "deconf/model.hpp"
#include "deconf/rng.hpp"
#include "deconf/synth.hpp"
#include "oracles.hpp"

using namespace deconf;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] %2d. %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// Trainings for the shared synthetic benchmark (criteria 4, 5, 6, 7b).
struct BenchmarkSeed {
  double naive_bias = 0.0;
  double did_error = 0.0;
  double model_ate_error = 0.0;
  double pehe_model = 0.0;
  double pehe_regression = 0.0;
  double accuracy = 0.0;
  double rmse_full = 0.0, rmse_no_graph = 0.0, rmse_no_temporal = 0.0;
  double max_param_norm = 0.0;
  double full_train_seconds = 0.0;
};

constexpr double kBenchmarkTau = 12.0;
constexpr int kBenchmarkEpochs = 250;

SynthConfig benchmark_config(std::uint64_t seed) {
  SynthConfig cfg;  // defaults already encode n=200, T=20, kappa=2, rho=0.7, gamma=0.3
  cfg.seed = seed;
  cfg.policies[0].tau = kBenchmarkTau;
  return cfg;
}

BenchmarkSeed run_benchmark_seed(std::uint64_t seed) {
  BenchmarkSeed out;
  const SynthPanel sp = generate(benchmark_config(seed));
  const PolicyGroundTruth& truth = sp.truth[0];
  const TrainingPanel panel =
      make_training_panel(sp.dataset, "synthetic_policy", OutcomeKind::confirmed);
  const SplitAssignment split = split_units(panel.n, seed);

  out.naive_bias = confounding_bias_oracle(sp, "synthetic_policy");
  {
    const BaselineResult d = did(panel);
    double err = 0.0;
    int defined = 0;
    for (const PeriodAte& a : d.ate)
      if (a.defined) {
        err += std::abs(a.ate - truth.ate[static_cast<std::size_t>(a.period)]);
        ++defined;
      }
    out.did_error = err / defined;
  }
  {
    const BaselineResult ols = outcome_regression(panel, &split);
    out.pehe_regression = pehe(ols.ite, truth.ite);
  }

  for (Ablation ablation : {Ablation::full, Ablation::no_graph, Ablation::no_temporal}) {
    TrainConfig config;
    config.epochs = kBenchmarkEpochs;
    config.seed = seed;
    config.ablation = ablation;
    const Clock::time_point start = Clock::now();
    const TrainResult trained = train(panel, sp.graph, split, config);
    const double elapsed = seconds_since(start);
    const EvalMetrics metrics = evaluate(trained.model, panel, sp.graph, split.test);
    switch (ablation) {
      case Ablation::full: {
        out.full_train_seconds = elapsed;
        out.rmse_full = metrics.rmse;
        out.accuracy = metrics.accuracy;
        const EffectEstimate est = estimate_effects(trained.model, panel, sp.graph);
        double err = 0.0;
        for (int t = 0; t < panel.T; ++t)
          err += std::abs(est.ate[static_cast<std::size_t>(t)] -
                          truth.ate[static_cast<std::size_t>(t)]);
        out.model_ate_error = err / panel.T;
        out.pehe_model = pehe(est.ite, truth.ite);
        for (const auto& [name, m] : trained.model.params.refs())
          out.max_param_norm = std::max(out.max_param_norm, m->frobenius_norm());
        break;
      }
      case Ablation::no_graph:
        out.rmse_no_graph = metrics.rmse;
        break;
      case Ablation::no_temporal:
        out.rmse_no_temporal = metrics.rmse;
        break;
    }
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing:" + path + ">";
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

static void criterion_1_gradients() {
  const Clock::time_point start = Clock::now();
  SynthConfig cfg;
  cfg.n = 5;
  cfg.periods = 3;
  cfg.d_x = 3;
  cfg.d_z = 2;
  cfg.square_side_km = 250.0;
  cfg.radius_km = 120.0;
  cfg.seed = 11;
  const SynthPanel sp = generate(cfg);
  const TrainingPanel panel =
      make_training_panel(sp.dataset, "synthetic_policy", OutcomeKind::confirmed);
  const std::vector<int> mask = {0, 1, 2, 3, 4};

  ModelDims dims;
  dims.d_x = panel.d_x;
  dims.d_h = 4;
  dims.d_g = 5;
  dims.d_z = 3;
  dims.d_o = 4;
  ModelParams params = ModelParams::init(dims, 3);
  const OutcomeTransform transform = OutcomeTransform::fit(panel.y, mask);
  const LossWeights weights{1.0, 1e-2, 0.01};

  CompositeOptions value_opts;
  value_opts.with_grads = false;
  auto loss = [&]() {
    return composite_loss(panel, sp.graph, transform, params, weights, mask, value_opts)
        .breakdown.total;
  };
  auto grads = [&]() {
    CompositeOptions grad_opts;
    GradientSet g =
        composite_loss(panel, sp.graph, transform, params, weights, mask, grad_opts).grads;
    add_l2_gradients(g, params, weights.lambda);
    return g;
  };
  GradCheckConfig gc;
  gc.coords_per_tensor = 100;
  const GradCheckReport rep = finite_diff_check(loss, grads, params.refs(), gc);
  const double elapsed = seconds_since(start);
  report(1, "gradient correctness", rep.max_rel_error < 1e-4 && elapsed < 10.0,
         fmt("max rel err %.2e over %d coords (tol 1e-4), %.1f s (limit 10 s)", rep.max_rel_error,
             rep.coords_checked, elapsed));
}

static void criterion_2_wasserstein() {
  const Clock::time_point start = Clock::now();
  Rng rng(5);
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    const int m = 4 + rng.uniform_int(0, 60);  // group sizes <= 64
    std::vector<double> a(static_cast<std::size_t>(m)), b(static_cast<std::size_t>(m));
    const double separation = rng.uniform(1.0, 3.0);
    const double spread = rng.uniform(0.2, 0.5);
    for (double& v : a) v = rng.normal(0.0, spread);
    for (double& v : b) v = separation + rng.normal(0.0, spread);
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
    const BalanceResult sink = balancing_loss(z, c, mask);
    const double w1 = oracle::sorted_w1(a, b);
    worst = std::max(worst, std::abs(sink.value - w1) / w1);
  }
  const double elapsed = seconds_since(start);
  report(2, "Wasserstein oracle", worst < 0.02 && elapsed < 5.0,
         fmt("worst rel err %.4f over 50 instances (tol 0.02), %.1f s (limit 5 s)", worst,
             elapsed));
}

static void criterion_3_renormalization() {
  const Clock::time_point start = Clock::now();
  Rng rng(7);
  double worst_symmetry = 0.0, worst_eigenpair = 0.0, worst_spectrum = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    const int n = 5 + rng.uniform_int(0, 45);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (rng.uniform01() < 0.3) {
          const double w = rng.uniform(0.05, 2.5);
          a(i, j) = w;
          a(j, i) = w;
        }
    const Matrix ahat = renormalize(a);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        worst_symmetry = std::max(worst_symmetry, std::abs(ahat(i, j) - ahat(j, i)));

    std::vector<double> d(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      double s = 1.0;
      for (int j = 0; j < n; ++j) s += a(i, j);
      d[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += ahat(i, j) * d[static_cast<std::size_t>(j)];
      worst_eigenpair = std::max(
          worst_eigenpair, std::abs(s - d[static_cast<std::size_t>(i)]) / d[static_cast<std::size_t>(i)]);
    }
    const std::vector<double> eig = oracle::symmetric_eigenvalues(ahat);
    worst_spectrum = std::max({worst_spectrum, -1.0 - eig.front(), eig.back() - 1.0});
  }
  const double elapsed = seconds_since(start);
  report(3, "renormalization invariants",
         worst_symmetry < 1e-9 && worst_eigenpair < 1e-6 && worst_spectrum < 1e-6 && elapsed < 5.0,
         fmt("symmetry %.1e (tol 1e-9), eigenpair %.1e, spectrum excess %.1e (tol 1e-6), %.1f s",
             worst_symmetry, worst_eigenpair, worst_spectrum, elapsed));
}

static std::vector<BenchmarkSeed> run_shared_benchmark() {
  std::vector<BenchmarkSeed> seeds;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) seeds.push_back(run_benchmark_seed(seed));
  return seeds;
}

static void criterion_4_deconfounding(const std::vector<BenchmarkSeed>& seeds) {
  double bias = 0.0, err = 0.0, pehe_m = 0.0, pehe_r = 0.0, full_seconds = 0.0;
  double max_norm = 0.0;
  for (const BenchmarkSeed& s : seeds) {
    bias += s.naive_bias;
    err += s.model_ate_error;
    pehe_m += s.pehe_model;
    pehe_r += s.pehe_regression;
    full_seconds += s.full_train_seconds;
    max_norm = std::max(max_norm, s.max_param_norm);
  }
  const double k = static_cast<double>(seeds.size());
  bias /= k;
  err /= k;
  pehe_m /= k;
  pehe_r /= k;
  const bool pass = bias > 0.25 * kBenchmarkTau && err < 0.15 * kBenchmarkTau && err < bias &&
                    pehe_m < pehe_r && full_seconds < 900.0 && max_norm < 1e4;
  report(4, "synthetic deconfounding", pass,
         fmt("naive bias %.1f%% of tau (need >25%%), model ATE error %.1f%% (need <15%%) and < "
             "bias %.2f, PEHE %.2f < regression %.2f, %.0f s full-model training (limit 900), "
             "max tensor norm %.1f",
             100.0 * bias / kBenchmarkTau, 100.0 * err / kBenchmarkTau, bias, pehe_m, pehe_r,
             full_seconds, max_norm));
}

static void criterion_5_ablation_ordering(const std::vector<BenchmarkSeed>& seeds) {
  int ordered = 0;
  std::string detail;
  for (const BenchmarkSeed& s : seeds) {
    const bool ok = s.rmse_full < s.rmse_no_graph && s.rmse_no_graph < s.rmse_no_temporal;
    ordered += ok ? 1 : 0;
    detail += fmt("%s(%.2f<%.2f<%.2f) ", ok ? "+" : "-", s.rmse_full, s.rmse_no_graph,
                  s.rmse_no_temporal);
  }
  report(5, "ablation ordering", ordered >= 4,
         fmt("full < no_graph < no_temporal in %d/5 seeds (need >=4): %s", ordered,
             detail.c_str()));
}

static void criterion_6_treatment_accuracy(const std::vector<BenchmarkSeed>& seeds) {
  double acc = 0.0;
  for (const BenchmarkSeed& s : seeds) acc += s.accuracy;
  acc /= static_cast<double>(seeds.size());
  report(6, "treatment prediction", acc > 0.80,
         fmt("test accuracy %.1f%% averaged over 5 seeds (need >80%%)", 100.0 * acc));
}

static void criterion_7_did(const std::vector<BenchmarkSeed>& seeds) {
  // parallel trends: no confounder pathway, independent assignment,
  // additive unit and time effects, step effect tau = 10
  const double tau = 10.0;
  std::vector<double> estimates;
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    SynthConfig cfg;
    cfg.n = 60;
    cfg.periods = 8;
    cfg.d_x = 4;
    cfg.d_z = 2;
    cfg.square_side_km = 500.0;
    cfg.kappa = 0.0;
    cfg.lin_scale = 0.0;
    cfg.quad_scale = 0.0;
    cfg.sigma_unit = 5.0;
    cfg.sigma_time = 3.0;
    cfg.sigma_y = 1.5;
    cfg.policies[0].tau = tau;
    cfg.seed = seed;
    const SynthPanel sp = generate(cfg);
    const TrainingPanel panel =
        make_training_panel(sp.dataset, "synthetic_policy", OutcomeKind::confirmed);
    const BaselineResult d = did(panel);
    estimates.push_back(d.mean_defined_ate());
  }
  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= static_cast<double>(estimates.size());
  double sd = 0.0;
  for (double e : estimates) sd += (e - mean) * (e - mean);
  sd = std::sqrt(sd / (static_cast<double>(estimates.size()) - 1.0));
  const double standard_error = sd / std::sqrt(static_cast<double>(estimates.size()));
  const bool recovers = std::abs(mean - tau) < 3.0 * standard_error;

  double did_err = 0.0, model_err = 0.0;
  for (const BenchmarkSeed& s : seeds) {
    did_err += s.did_error;
    model_err += s.model_ate_error;
  }
  did_err /= static_cast<double>(seeds.size());
  model_err /= static_cast<double>(seeds.size());
  const bool biased_when_confounded = did_err > model_err;

  report(7, "DID sanity", recovers && biased_when_confounded,
         fmt("parallel trends: estimate %.2f vs tau %.1f (3 SE = %.2f over 20 seeds); confounded "
             "trends: DID error %.2f > model error %.2f",
             mean, tau, 3.0 * standard_error, did_err, model_err));
}

static void criterion_8_baseline_oracles() {
  bool pass = true;
  std::string detail;

  {  // naive: treated {10, 20}, control {5, 5}
    TrainingPanel p;
    p.n = 4;
    p.T = 1;
    p.d_x = 1;
    p.unit_ids = {"a", "b", "c", "d"};
    p.c = Matrix(1, 4);
    p.c(0, 0) = 1.0;
    p.c(0, 1) = 1.0;
    p.y = Matrix(1, 4);
    p.y(0, 0) = 10.0;
    p.y(0, 1) = 20.0;
    p.y(0, 2) = 5.0;
    p.y(0, 3) = 5.0;
    p.x.assign(1, Matrix(4, 1));
    p.final_confirmed.assign(4, 1.0);
    const double got = naive_ate(p).ate[0].ate;
    const double expected = (10.0 + 20.0) / 2.0 - (5.0 + 5.0) / 2.0;
    pass = pass && std::abs(got - expected) < 1e-9;
    detail += fmt("naive %.1f==%.1f ", got, expected);
  }
  {  // DID: textbook 2x2 four-cell difference
    TrainingPanel p;
    p.n = 2;
    p.T = 2;
    p.d_x = 1;
    p.unit_ids = {"a", "b"};
    p.c = Matrix(2, 2);
    p.c(1, 0) = 1.0;
    p.y = Matrix(2, 2);
    p.y(0, 0) = 10.0;
    p.y(1, 0) = 18.0;
    p.y(0, 1) = 8.0;
    p.y(1, 1) = 11.0;
    p.x.assign(2, Matrix(2, 1));
    p.final_confirmed.assign(2, 1.0);
    const double got = did(p).ate[1].ate;
    const double expected = (18.0 - 10.0) - (11.0 - 8.0);
    pass = pass && std::abs(got - expected) < 1e-9;
    detail += fmt("did %.1f==%.1f ", got, expected);
  }
  {  // regression: 3-point system against the normal equations
    TrainingPanel p;
    p.n = 3;
    p.T = 1;
    p.d_x = 1;
    p.unit_ids = {"a", "b", "c"};
    const double x[3] = {0.0, 1.0, 2.0};
    const double c[3] = {0.0, 1.0, 1.0};
    const double y[3] = {1.0, 4.0, 6.0};
    p.c = Matrix(1, 3);
    p.y = Matrix(1, 3);
    p.x.assign(1, Matrix(3, 1));
    for (int u = 0; u < 3; ++u) {
      p.c(0, u) = c[u];
      p.y(0, u) = y[u];
      p.x[0](u, 0) = x[u];
    }
    p.final_confirmed.assign(3, 1.0);
    const double got = outcome_regression(p).ate[0].ate;
    Matrix dtd(3, 3);
    std::vector<double> dty(3, 0.0);
    for (int u = 0; u < 3; ++u) {
      const double row[3] = {1.0, x[u], c[u]};
      for (int i = 0; i < 3; ++i) {
        dty[static_cast<std::size_t>(i)] += row[i] * y[u];
        for (int j = 0; j < 3; ++j) dtd(i, j) += row[i] * row[j];
      }
    }
    for (int i = 0; i < 3; ++i) dtd(i, i) += 1e-8;
    const double expected = oracle::solve(dtd, dty)[2];
    pass = pass && std::abs(got - expected) < 1e-9;
    detail += fmt("regression %.4f==%.4f", got, expected);
  }
  report(8, "baseline oracles", pass, detail);
}

static void criterion_9_determinism() {
  const fs::path root = fs::temp_directory_path() / "deconf_acceptance_determinism";
  fs::remove_all(root);

  auto pipeline = [&](const std::string& tag) {
    const std::string base = (root / tag).string();
    SynthCommandOptions synth_opt;
    synth_opt.config.n = 40;
    synth_opt.config.periods = 6;
    synth_opt.config.d_x = 4;
    synth_opt.config.d_z = 2;
    synth_opt.config.square_side_km = 400.0;
    synth_opt.config.seed = 77;
    synth_opt.out_dir = base + "/raw";
    if (cmd_synth(synth_opt) != kOk) return std::string("synth failed");

    IngestOptions ingest;
    ingest.units_path = base + "/raw/units.csv";
    ingest.policies_path = base + "/raw/policies.csv";
    ingest.cases_path = base + "/raw/cases.csv";
    ingest.trends_path = base + "/raw/trends.csv";
    ingest.distance_edges_path = base + "/raw/distance_edges.csv";
    ingest.category_map_path = base + "/raw/category_map.txt";
    ingest.outcome_mode = "incident";
    ingest.out_dir = base + "/bundle";
    if (cmd_ingest(ingest) != kOk) return std::string("ingest failed");

    RunOptions run;
    run.bundle_dir = base + "/bundle";
    run.out_dir = base + "/run";
    run.policy = "synthetic_policy";
    run.seeds = {1, 2};
    run.train.epochs = 40;
    run.train.d_h = 8;
    run.train.d_z = 6;
    run.train.d_g = 8;
    run.train.d_o = 8;
    if (cmd_run(run) != kOk) return std::string("run failed");

    ReportOptions rep;
    rep.run_dirs = {base + "/run"};
    rep.out_dir = base + "/figures";
    if (cmd_report(rep) != kOk) return std::string("report failed");
    return std::string();
  };

  const std::string err_a = pipeline("a");
  const std::string err_b = pipeline("b");
  bool pass = err_a.empty() && err_b.empty();
  std::string detail = pass ? "" : err_a + " " + err_b;
  if (pass) {
    const char* files[] = {"run/seed_1/effects.csv", "run/seed_2/effects.csv",
                           "figures/ate_series_synthetic_policy.csv",
                           "figures/normalized_ite_synthetic_policy.csv"};
    for (const char* f : files) {
      const std::string a = slurp((root / "a" / f).string());
      const std::string b = slurp((root / "b" / f).string());
      if (a != b || a.empty()) {
        pass = false;
        detail += fmt("mismatch in %s ", f);
      }
    }
    if (pass) detail = "synth->ingest->run->report twice: effect CSVs byte-identical";
  }
  fs::remove_all(root);
  report(9, "end-to-end determinism", pass, detail);
}

static void criterion_10_sign_consistency() {
  const double tau = 12.0;
  int wrong_signs = 0;
  int periods_checked = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig cfg;
    cfg.n = 120;
    cfg.periods = 12;
    cfg.square_side_km = 620.0;  // keeps the mean degree near the benchmark's
    cfg.policies = {SynthPolicy{"policy_positive", tau}, SynthPolicy{"policy_negative", -tau}};
    cfg.seed = seed;
    const SynthPanel sp = generate(cfg);
    for (const SynthPolicy& policy : cfg.policies) {
      const TrainingPanel panel =
          make_training_panel(sp.dataset, policy.name, OutcomeKind::confirmed);
      const SplitAssignment split = split_units(panel.n, seed);
      TrainConfig config;
      config.epochs = kBenchmarkEpochs;
      config.seed = seed;
      const TrainResult trained = train(panel, sp.graph, split, config);
      const EffectEstimate est = estimate_effects(trained.model, panel, sp.graph, policy.name);
      for (double a : est.ate) {
        ++periods_checked;
        if (a * policy.tau <= 0.0) ++wrong_signs;
      }
    }
  }
  report(10, "sign consistency", wrong_signs == 0,
         fmt("two policies with effects +-%.0f over 5 seeds: %d/%d period ATEs carry the correct "
             "sign",
             tau, periods_checked - wrong_signs, periods_checked));
}

int main() {
  const Clock::time_point start = Clock::now();
  std::printf("acceptance suite (single-threaded)\n");

  criterion_1_gradients();
  criterion_2_wasserstein();
  criterion_3_renormalization();

  const std::vector<BenchmarkSeed> benchmark = run_shared_benchmark();
  criterion_4_deconfounding(benchmark);
  criterion_5_ablation_ordering(benchmark);
  criterion_6_treatment_accuracy(benchmark);
  criterion_7_did(benchmark);
  criterion_8_baseline_oracles();
  criterion_9_determinism();
  criterion_10_sign_consistency();

  std::printf("ACCEPTANCE: %d/10 passed in %.0f s\n", 10 - failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
