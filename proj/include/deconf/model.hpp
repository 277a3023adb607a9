#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deconf/autodiff.hpp"
#include "deconf/graph.hpp"
#include "deconf/matrix.hpp"
#include "deconf/optimizer.hpp"
#include "deconf/panel.hpp"

namespace deconf {

struct ModelDims {
  int d_x = 0;   // covariates
  int d_h = 50;  // recurrent memory
  int d_g = 50;  // hidden GCN width
  int d_z = 50;  // confounder representation
  int d_o = 50;  // outcome-head hidden width
};

struct GruWeights {
  Matrix w_reset, u_reset, b_reset;
  Matrix w_update, u_update, b_update;
  Matrix w_cand, u_cand, b_cand;
};

struct MlpHead {
  Matrix w_hidden, b_hidden;  // d_z x d_o, 1 x d_o
  Matrix w_out, b_out;        // d_o x 1, 1 x 1
};

/// All trainable weights. The GCN layers carry no biases; the recurrent cell
/// and the heads do.
struct ModelParams {
  ModelDims dims;
  Matrix gcn_w0;  // (d_x + d_h) x d_g
  Matrix gcn_w1;  // d_g x d_z
  GruWeights gru; // input size d_z + d_x + 2
  MlpHead head_treated;  // f1
  MlpHead head_control;  // f0
  Matrix treat_w;  // d_z x 2
  Matrix treat_b;  // 1 x 2

  /// Glorot-uniform weights, zero biases; draw order is fixed, so identical
  /// (dims, seed) produce identical parameters.
  static ModelParams init(const ModelDims& dims, std::uint64_t seed);

  ParamRefs refs();
  std::vector<std::pair<std::string, const Matrix*>> refs() const;
  double squared_norm() const;  // ||Theta||^2 over every tensor
  void require_all_finite() const;
};

/// Which structural pieces of the network are wired in. The full model uses
/// both; ablations replace Ahat by the identity or pin the memory at zero.
struct ModelWiring {
  bool use_graph = true;
  bool use_temporal = true;
};

/// log1p outcomes standardized over training units; estimated effects are
/// mapped back through the inverse.
struct OutcomeTransform {
  double mean = 0.0;
  double sd = 1.0;

  static OutcomeTransform fit(const Matrix& y, const std::vector<int>& units);
  double apply(double y) const;
  double invert(double v) const;
  Matrix apply_all(const Matrix& y) const;
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 1e-4;
  double lambda = 0.01;
};

struct LossBreakdown {
  double l_y = 0.0;
  double l_c = 0.0;
  double l_b = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double alpha = 0.0, beta = 0.0, lambda = 0.0;
  int degenerate_balance_periods = 0;  // periods contributing 0 (a group was empty)
};

// ---------------------------------------------------------------------------
// Plain-matrix forms of the individual operations. Each one runs the same
// tape code the training path uses and returns the value.

/// Z = Ahat * ReLU(Ahat * (X (+) H_prev) * W0) * W1; pass nullptr for Ahat to
/// use the identity (the no-graph ablation).
Matrix encode_confounders(const Matrix& h_prev, const Matrix& x, const Matrix* ahat,
                          const ModelParams& params);

/// GRU update on the concatenated (Z (+) X (+) C (+) Y) input. Entries stay
/// in (-1, 1). y_scaled must already be transformed.
Matrix update_memory(const Matrix& h_prev, const Matrix& z, const Matrix& x, const Matrix& c,
                     const Matrix& y_scaled, const ModelParams& params);

/// (y1_hat, y0_hat), each n x 1, in the transformed outcome scale.
std::pair<Matrix, Matrix> predict_outcomes(const Matrix& z, const ModelParams& params);

/// Treated-class probability of the 2-way softmax, n x 1, in (0, 1).
Matrix predict_treatment(const Matrix& z, const ModelParams& params);

/// Mean over masked units of (y_hat_c - y)^2, with the head picked by the
/// observed treatment. Throws on an empty mask.
double factual_loss(const Matrix& y1_hat, const Matrix& y0_hat, const Matrix& c, const Matrix& y,
                    const std::vector<int>& mask);

/// Mean over masked units of the binary cross entropy, probabilities clamped
/// to [1e-7, 1 - 1e-7].
double treatment_loss(const Matrix& s_hat, const Matrix& c, const std::vector<int>& mask);

struct BalanceResult {
  double value = 0.0;
  bool degenerate = false;  // one group empty (or representations collapsed)
};

/// Entropic Sinkhorn approximation of the Wasserstein-1 distance between the
/// treated and control rows of Z within the mask: Euclidean cost, epsilon =
/// 0.1 x median cost, 50 iterations, uniform marginals.
BalanceResult balancing_loss(const Matrix& z, const Matrix& c, const std::vector<int>& mask);

// ---------------------------------------------------------------------------
// Training-path entry points.

struct PeriodPredictions {
  Matrix z;   // n x d_z
  Matrix y1;  // n x 1, transformed scale
  Matrix y0;
  Matrix s;   // treated probability
};

struct CompositeOptions {
  ModelWiring wiring;
  bool with_grads = true;
  bool with_predictions = false;
};

struct CompositeResult {
  LossBreakdown breakdown;
  GradientSet grads;  // d(L_y + alpha L_c + beta L_b)/dTheta; L2 is analytic
  std::vector<PeriodPredictions> predictions;
};

/// Unrolls t = 1..T (encode, predict, losses, memory update), averaging L_y
/// and L_c over all unit-periods of the mask and L_b over periods. Memory
/// updates always consume the observed treatment and outcome.
CompositeResult composite_loss(const TrainingPanel& panel, const TemporalGraph& graph,
                               const OutcomeTransform& transform, const ModelParams& params,
                               const LossWeights& weights, const std::vector<int>& mask,
                               const CompositeOptions& options);

/// Forward pass only; no losses, no mask requirements.
std::vector<PeriodPredictions> forward_predictions(const TrainingPanel& panel,
                                                   const TemporalGraph& graph,
                                                   const OutcomeTransform& transform,
                                                   const ModelParams& params,
                                                   const ModelWiring& wiring);

/// Adds the 2*lambda*theta regularizer contribution to a gradient set.
void add_l2_gradients(GradientSet& grads, const ModelParams& params, double lambda);

}  // namespace deconf
