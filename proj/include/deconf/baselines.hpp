#pragma once

#include <string>
#include <vector>

#include "deconf/matrix.hpp"
#include "deconf/panel.hpp"

namespace deconf {

struct PeriodAte {
  int period = 0;
  bool defined = false;  // false when a group was empty (estimate missing)
  double ate = 0.0;
};

struct BaselineResult {
  std::string method;
  std::vector<PeriodAte> ate;           // aligned with the dataset calendar
  std::vector<double> rmse_per_period;  // only for outcome-predicting methods
  double rmse = 0.0;                    // mean of per-period RMSE, 0 when absent
  Matrix ite;                           // n x T when the method yields unit effects
  int membership_changes = 0;           // DID: units whose status flipped between periods

  double mean_defined_ate() const;
};

/// Difference of group means of the observed outcomes per period.
BaselineResult naive_ate(const TrainingPanel& panel);

/// Per-period least squares of Y on (1, X, C) with ridge damping 1e-8; the
/// ATE is the C coefficient and potential outcomes come from toggling C.
/// When a split is given the fit uses training units and the RMSE is scored
/// on test units; otherwise everything uses all units.
BaselineResult outcome_regression(const TrainingPanel& panel,
                                  const SplitAssignment* split = nullptr);

/// Difference-in-differences on period deltas: [mean dY | treated at t] -
/// [mean dY | control at t] for t >= 1. Units whose treatment changed
/// between t-1 and t are grouped by their status at t and counted in
/// membership_changes.
BaselineResult did(const TrainingPanel& panel);

/// Solves (A + ridge I) x = b for symmetric positive definite A via
/// Cholesky. Throws NumericError with a condition estimate on failure.
std::vector<double> solve_spd(const Matrix& a, const std::vector<double>& b, double ridge);

}  // namespace deconf
