#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deconf/model.hpp"
#include "deconf/panel.hpp"

namespace deconf {

enum class Ablation { full, no_graph, no_temporal };

std::string ablation_name(Ablation a);
/// Parses "full" / "no_graph" / "no_temporal"; anything else is a config error.
Ablation parse_ablation(const std::string& kind);
ModelWiring wiring_for(Ablation a);

struct TrainConfig {
  double learning_rate = 3e-3;
  int epochs = 2000;
  double alpha = 1.0;
  double beta = 1e-4;
  double lambda = 0.01;
  int d_h = 50;
  int d_z = 50;
  int d_g = 50;
  int d_o = 50;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::full;
  GraphKind graph_kind = GraphKind::distance;
};

/// Returns the config rewired for an ablation study.
TrainConfig ablate(TrainConfig config, const std::string& kind);

/// Everything needed to run the model after training.
struct FittedModel {
  ModelParams params;
  OutcomeTransform transform;
  ModelWiring wiring;
};

struct EvalMetrics {
  double rmse = 0.0;      // factual outcomes, original units, mean over periods
  double accuracy = 0.0;  // treatment prediction, threshold 0.5 (>= maps to 1)
  std::vector<double> rmse_per_period;
  std::vector<double> accuracy_per_period;
};

struct TrainResult {
  FittedModel model;  // checkpoint with the best validation factual RMSE
  std::vector<LossBreakdown> history;
  std::vector<double> validation_rmse;  // per epoch, original units
  int best_epoch = -1;
  double best_validation_rmse = 0.0;
  EvalMetrics validation_metrics;  // of the returned checkpoint
};

/// Full-batch Adam for config.epochs steps. Transductive: the network sees
/// every unit's covariates and the whole graph, but losses are computed over
/// training units only. Deterministic given the seed. Throws NumericError
/// with the epoch index and last finite breakdown if the loss leaves the
/// finite range.
TrainResult train(const TrainingPanel& panel, const TemporalGraph& graph,
                  const SplitAssignment& split, const TrainConfig& config);

struct EffectEstimate {
  Matrix ite;                // n x T, original outcome units
  std::vector<double> ate;   // per period, mean of ITEs over units
  Matrix y_factual_hat;      // n x T, original units, head picked by observed C
  Matrix y_counterfactual_hat;
  std::vector<double> normalized_ite;  // mean ITE / final confirmed count; NaN when count is 0
  std::string policy;
};

/// Pure function of (model, panel, graph): unrolls over the factual history
/// and reports y1_hat - y0_hat per unit-period, inverse-transformed.
EffectEstimate estimate_effects(const FittedModel& model, const TrainingPanel& panel,
                                const TemporalGraph& graph, const std::string& policy = "");

/// Factual RMSE and treatment accuracy over the given units.
EvalMetrics evaluate(const FittedModel& model, const TrainingPanel& panel,
                     const TemporalGraph& graph, const std::vector<int>& units);

/// Root mean squared ITE error against ground truth, both n x T.
double pehe(const Matrix& estimated_ite, const Matrix& true_ite);

/// Versioned JSON checkpoint of named tensors plus the outcome transform.
void save_checkpoint(const FittedModel& model, const std::string& path);
FittedModel load_checkpoint(const std::string& path);

}  // namespace deconf
