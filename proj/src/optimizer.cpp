#include "deconf/optimizer.hpp"

#include <cmath>

#include "deconf/error.hpp"

namespace deconf {

void AdamState::step(const ParamRefs& params, const GradientSet& grads, double l2_lambda) {
  ++step_count_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));

  for (const auto& [name, theta] : params) {
    auto it = grads.find(name);
    if (it == grads.end())
      throw DataError("adam_step: missing gradient for parameter '" + name + "'");
    const Matrix& g = it->second;
    if (!g.same_shape(*theta))
      throw DimensionError("adam_step: gradient shape " + g.shape_str() +
                           " does not match parameter '" + name + "' " + theta->shape_str());

    Matrix& m = first_moment_.try_emplace(name, theta->rows(), theta->cols()).first->second;
    Matrix& v = second_moment_.try_emplace(name, theta->rows(), theta->cols()).first->second;

    double* pt = theta->data();
    double* pm = m.data();
    double* pv = v.data();
    const double* pg = g.data();
    for (std::size_t i = 0; i < theta->size(); ++i) {
      const double grad_i = pg[i] + 2.0 * l2_lambda * pt[i];
      pm[i] = b1 * pm[i] + (1.0 - b1) * grad_i;
      pv[i] = b2 * pv[i] + (1.0 - b2) * grad_i * grad_i;
      const double m_hat = pm[i] / corr1;
      const double v_hat = pv[i] / corr2;
      pt[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    require_finite(*theta, "adam_step: parameter '" + name + "'");
  }
}

}  // namespace deconf
