#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "deconf/optimizer.hpp"

namespace deconf {

struct GradCheckConfig {
  double step = 1e-5;          // central-difference step
  int coords_per_tensor = 100; // sampled coordinates (all if a tensor is smaller)
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  int worst_flat_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int coords_checked = 0;

  bool within(double rel_tol) const { return max_rel_error < rel_tol; }
};

/// Compares analytic gradients against central finite differences on a
/// random subsample of coordinates per tensor. `loss` must be deterministic
/// given the parameter values; it is re-evaluated with individual
/// coordinates perturbed in place (and restored). Throws NumericError on a
/// non-finite loss.
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::function<GradientSet()>& analytic_grads,
                                  const ParamRefs& params,
                                  const GradCheckConfig& config = {});

}  // namespace deconf
