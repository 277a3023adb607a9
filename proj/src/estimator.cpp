#include "deconf/estimator.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "deconf/error.hpp"

namespace deconf {

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_graph: return "no_graph";
    case Ablation::no_temporal: return "no_temporal";
  }
  return "full";
}

Ablation parse_ablation(const std::string& kind) {
  if (kind == "full") return Ablation::full;
  if (kind == "no_graph") return Ablation::no_graph;
  if (kind == "no_temporal") return Ablation::no_temporal;
  throw ConfigError("unknown ablation kind '" + kind +
                    "', expected full, no_graph or no_temporal");
}

ModelWiring wiring_for(Ablation a) {
  switch (a) {
    case Ablation::full: return ModelWiring{true, true};
    case Ablation::no_graph: return ModelWiring{false, true};
    case Ablation::no_temporal: return ModelWiring{true, false};
  }
  return ModelWiring{};
}

TrainConfig ablate(TrainConfig config, const std::string& kind) {
  config.ablation = parse_ablation(kind);
  return config;
}

namespace {

struct PeriodScores {
  double rmse = 0.0;
  double accuracy = 0.0;
};

PeriodScores score_period(const PeriodPredictions& pred, const TrainingPanel& panel,
                          const OutcomeTransform& transform, int t,
                          const std::vector<int>& units) {
  double se = 0.0;
  int correct = 0;
  for (int u : units) {
    const bool treated = panel.c(t, u) != 0.0;
    const double y_hat = transform.invert(treated ? pred.y1(u, 0) : pred.y0(u, 0));
    const double r = y_hat - panel.y(t, u);
    se += r * r;
    const int predicted = pred.s(u, 0) >= 0.5 ? 1 : 0;  // ties go to treated
    correct += predicted == (treated ? 1 : 0) ? 1 : 0;
  }
  PeriodScores s;
  s.rmse = std::sqrt(se / static_cast<double>(units.size()));
  s.accuracy = static_cast<double>(correct) / static_cast<double>(units.size());
  return s;
}

EvalMetrics score_all(const std::vector<PeriodPredictions>& preds, const TrainingPanel& panel,
                      const OutcomeTransform& transform, const std::vector<int>& units) {
  EvalMetrics m;
  if (units.empty()) return m;
  for (int t = 0; t < panel.T; ++t) {
    const PeriodScores s = score_period(preds[static_cast<std::size_t>(t)], panel, transform, t, units);
    m.rmse_per_period.push_back(s.rmse);
    m.accuracy_per_period.push_back(s.accuracy);
    m.rmse += s.rmse;
    m.accuracy += s.accuracy;
  }
  m.rmse /= panel.T;
  m.accuracy /= panel.T;
  return m;
}

std::string describe(const LossBreakdown& b) {
  std::ostringstream os;
  os << "L_y=" << b.l_y << " L_c=" << b.l_c << " L_b=" << b.l_b << " L2=" << b.l2
     << " total=" << b.total;
  return os.str();
}

}  // namespace

TrainResult train(const TrainingPanel& panel, const TemporalGraph& graph,
                  const SplitAssignment& split, const TrainConfig& config) {
  ModelDims dims;
  dims.d_x = panel.d_x;
  dims.d_h = config.d_h;
  dims.d_z = config.d_z;
  dims.d_g = config.d_g;
  dims.d_o = config.d_o;

  TrainResult result;
  result.model.wiring = wiring_for(config.ablation);
  result.model.transform = OutcomeTransform::fit(panel.y, split.train);
  result.model.params = ModelParams::init(dims, config.seed);

  ModelParams current = result.model.params;
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  AdamState adam(adam_config);
  LossWeights weights{config.alpha, config.beta, config.lambda};

  CompositeOptions options;
  options.wiring = result.model.wiring;
  options.with_grads = true;
  options.with_predictions = true;

  result.best_validation_rmse = std::numeric_limits<double>::infinity();
  LossBreakdown last_finite;
  bool have_finite = false;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    CompositeResult step =
        composite_loss(panel, graph, result.model.transform, current, weights, split.train, options);
    if (!std::isfinite(step.breakdown.total)) {
      throw NumericError("training aborted at epoch " + std::to_string(epoch) +
                         ": non-finite loss; last finite breakdown: " +
                         (have_finite ? describe(last_finite) : std::string("none")));
    }
    last_finite = step.breakdown;
    have_finite = true;
    result.history.push_back(step.breakdown);

    const EvalMetrics val =
        score_all(step.predictions, panel, result.model.transform, split.validation);
    result.validation_rmse.push_back(val.rmse);
    if (val.rmse < result.best_validation_rmse) {
      result.best_validation_rmse = val.rmse;
      result.best_epoch = epoch;
      result.model.params = current;  // snapshot before this epoch's update
      result.validation_metrics = val;
    }

    adam.step(current.refs(), step.grads, config.lambda);
  }

  if (config.epochs == 0 || result.best_epoch < 0) {
    result.model.params = current;
  }
  result.model.params.require_all_finite();
  return result;
}

EffectEstimate estimate_effects(const FittedModel& model, const TrainingPanel& panel,
                                const TemporalGraph& graph, const std::string& policy) {
  const std::vector<PeriodPredictions> preds =
      forward_predictions(panel, graph, model.transform, model.params, model.wiring);

  EffectEstimate est;
  est.policy = policy;
  est.ite = Matrix(panel.n, panel.T);
  est.y_factual_hat = Matrix(panel.n, panel.T);
  est.y_counterfactual_hat = Matrix(panel.n, panel.T);
  est.ate.assign(static_cast<std::size_t>(panel.T), 0.0);

  for (int t = 0; t < panel.T; ++t) {
    const PeriodPredictions& p = preds[static_cast<std::size_t>(t)];
    double sum = 0.0;
    for (int u = 0; u < panel.n; ++u) {
      const double y1 = model.transform.invert(p.y1(u, 0));
      const double y0 = model.transform.invert(p.y0(u, 0));
      est.ite(u, t) = y1 - y0;
      sum += y1 - y0;
      if (panel.c(t, u) != 0.0) {
        est.y_factual_hat(u, t) = y1;
        est.y_counterfactual_hat(u, t) = y0;
      } else {
        est.y_factual_hat(u, t) = y0;
        est.y_counterfactual_hat(u, t) = y1;
      }
    }
    est.ate[static_cast<std::size_t>(t)] = sum / static_cast<double>(panel.n);
  }

  est.normalized_ite.assign(static_cast<std::size_t>(panel.n),
                            std::numeric_limits<double>::quiet_NaN());
  for (int u = 0; u < panel.n; ++u) {
    double mean_ite = 0.0;
    for (int t = 0; t < panel.T; ++t) mean_ite += est.ite(u, t);
    mean_ite /= static_cast<double>(panel.T);
    const double final_count = panel.final_confirmed[static_cast<std::size_t>(u)];
    if (final_count > 0.0) est.normalized_ite[static_cast<std::size_t>(u)] = mean_ite / final_count;
  }
  return est;
}

EvalMetrics evaluate(const FittedModel& model, const TrainingPanel& panel,
                     const TemporalGraph& graph, const std::vector<int>& units) {
  const std::vector<PeriodPredictions> preds =
      forward_predictions(panel, graph, model.transform, model.params, model.wiring);
  return score_all(preds, panel, model.transform, units);
}

double pehe(const Matrix& estimated_ite, const Matrix& true_ite) {
  if (!estimated_ite.same_shape(true_ite))
    throw DimensionError("pehe: shape " + estimated_ite.shape_str() + " vs " +
                         true_ite.shape_str());
  double se = 0.0;
  for (std::size_t i = 0; i < estimated_ite.size(); ++i) {
    const double d = estimated_ite.data()[i] - true_ite.data()[i];
    se += d * d;
  }
  return std::sqrt(se / static_cast<double>(estimated_ite.size()));
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON manifest of named tensors.

namespace {
constexpr const char* kCheckpointFormat = "deconf-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const FittedModel& model, const std::string& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["dims"] = {{"d_x", model.params.dims.d_x}, {"d_h", model.params.dims.d_h},
               {"d_g", model.params.dims.d_g}, {"d_z", model.params.dims.d_z},
               {"d_o", model.params.dims.d_o}};
  j["wiring"] = {{"use_graph", model.wiring.use_graph},
                 {"use_temporal", model.wiring.use_temporal}};
  j["transform"] = {{"mean", model.transform.mean}, {"sd", model.transform.sd}};
  nlohmann::json tensors;
  for (const auto& [name, m] : model.params.refs()) {
    tensors[name] = {{"rows", m->rows()}, {"cols", m->cols()}, {"data", m->values()}};
  }
  j["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write checkpoint '" + path + "'");
  out << j.dump(2) << '\n';
}

FittedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != kCheckpointFormat)
    throw SchemaError(path + ": not a checkpoint file");
  if (j.value("version", 0) != kCheckpointVersion)
    throw SchemaError(path + ": unsupported checkpoint version");

  FittedModel model;
  ModelDims dims;
  dims.d_x = j["dims"]["d_x"].get<int>();
  dims.d_h = j["dims"]["d_h"].get<int>();
  dims.d_g = j["dims"]["d_g"].get<int>();
  dims.d_z = j["dims"]["d_z"].get<int>();
  dims.d_o = j["dims"]["d_o"].get<int>();
  model.params = ModelParams::init(dims, 0);
  model.wiring.use_graph = j["wiring"]["use_graph"].get<bool>();
  model.wiring.use_temporal = j["wiring"]["use_temporal"].get<bool>();
  model.transform.mean = j["transform"]["mean"].get<double>();
  model.transform.sd = j["transform"]["sd"].get<double>();

  for (auto& [name, m] : model.params.refs()) {
    const auto& t = j["tensors"].at(name);
    const int rows = t["rows"].get<int>();
    const int cols = t["cols"].get<int>();
    std::vector<double> data = t["data"].get<std::vector<double>>();
    *m = Matrix(rows, cols, std::move(data));
  }
  model.params.require_all_finite();
  return model;
}

}  // namespace deconf
