#include "deconf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "deconf/error.hpp"
#include "deconf/rng.hpp"

namespace deconf {

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  const std::function<GradientSet()>& analytic_grads,
                                  const ParamRefs& params, const GradCheckConfig& config) {
  const GradientSet grads = analytic_grads();
  Rng rng(config.seed);
  GradCheckReport report;

  auto eval = [&]() {
    const double v = loss();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss");
    return v;
  };

  for (const auto& [name, theta] : params) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw DataError("finite_diff_check: no analytic gradient for '" + name + "'");
    const Matrix& g = it->second;

    const int total = static_cast<int>(theta->size());
    std::vector<int> coords;
    if (total <= config.coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(total));
      for (int i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      std::vector<int> perm = rng.permutation(total);
      coords.assign(perm.begin(), perm.begin() + config.coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    for (int flat : coords) {
      double* slot = theta->data() + flat;
      const double saved = *slot;
      *slot = saved + config.step;
      const double up = eval();
      *slot = saved - config.step;
      const double down = eval();
      *slot = saved;

      const double numeric = (up - down) / (2.0 * config.step);
      const double analytic = g.data()[flat];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      const double rel = std::abs(numeric - analytic) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = name;
        report.worst_flat_index = flat;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace deconf
