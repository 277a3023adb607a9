#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deconf/calendar.hpp"
#include "deconf/graph.hpp"
#include "deconf/matrix.hpp"
#include "deconf/panel.hpp"

namespace deconf {

struct SynthPolicy {
  std::string name = "synthetic_policy";
  double tau = 12.0;  // true effect in original outcome units
};

/// Ground-truth generator: latent confounders drift and diffuse over a
/// random geometric graph, covariates proxy them, treatments depend on them
/// through a sigmoid, and outcomes combine a quadratic confounder signal with
/// unit and time effects. Deterministic function of (config, seed).
struct SynthConfig {
  int n = 200;
  int periods = 20;
  int d_x = 10;       // proxy covariate dims
  int d_z = 4;        // latent confounder dims

  // random geometric graph, 1/distance weights
  double square_side_km = 800.0;
  double radius_km = 100.0;
  double min_separation_km = 2.0;

  double rho = 0.7;    // confounder autoregression
  double gamma = 0.3;  // neighbor mixing (dynamics and innovation smoothing)
  double kappa = 2.0;  // treatment confounding strength
  double treatment_bias = 0.0;
  double treatment_direction_scale = 1.2;  // norm of w in sigmoid(kappa <w, z> + b)

  std::vector<SynthPolicy> policies = {SynthPolicy{}};
  bool heterogeneous_effects = false;  // tau_i = tau (1 + 0.5 u_i), u ~ U(-1,1)

  double sigma_z0 = 1.0;   // initial confounder scale
  double sigma_z = 1.0;    // per-period innovation
  int smoothing_rounds = 6;  // neighbor-averaging rounds on the noise fields
  double drift = 0.05;     // deterministic confounder drift per period
  double sigma_x = 1.5;    // proxy noise
  double base_outcome = 60.0;
  double lin_scale = 2.4;   // linear confounder -> outcome signal
  double quad_scale = 0.55; // quadratic confounder -> outcome signal
  double sigma_unit = 3.0;  // unit fixed effects
  double sigma_time = 2.5;  // common period effects
  double sigma_y = 2.0;     // outcome noise
  double outcome_floor_margin = 1.0;

  std::uint64_t seed = 1;
  std::string start_date = "2020-02-01";
  int period_days = 15;
};

struct PolicyGroundTruth {
  std::string name;
  double tau = 0.0;
  double bayes_accuracy = 0.0;   // E[max(p, 1-p)] of the true assignment probabilities
  std::vector<double> tau_unit;  // per-unit true effects
  Matrix ite;                    // n x T, original units
  Matrix ite_log1p;              // n x T, log1p-scale differences
  std::vector<double> ate;       // per period
  Matrix y_treated;              // n x T potential outcome with this policy on
  Matrix y_control;              // n x T with it off (other policies factual)
};

struct SynthPanel {
  PanelDataset dataset;  // incident-mode outcomes
  TemporalGraph graph;
  std::vector<Matrix> z_star;  // T of n x d_z true confounders
  std::vector<PolicyGroundTruth> truth;

  const PolicyGroundTruth& truth_for(const std::string& policy) const;
};

SynthPanel generate(const SynthConfig& config);

/// Same generative process, but the confounder diffusion runs over the given
/// graph instead of a freshly sampled one (keeps the random stream aligned,
/// which isolates the effect of the edges).
SynthPanel generate_with_graph(const SynthConfig& config, const TemporalGraph& graph);

/// |naive ATE - true ATE| averaged over defined periods, computed from the
/// raw arrays; the benchmark bias that deconfounding has to beat.
double confounding_bias_oracle(const SynthPanel& panel, const std::string& policy);

/// Writes the ingestion-format CSV bundle (units, distance edges, policies,
/// cases, trends, category map) plus a ground-truth sidecar that estimators
/// never read.
void write_synth_bundle(const SynthPanel& panel, const SynthConfig& config,
                        const std::string& directory);

}  // namespace deconf
