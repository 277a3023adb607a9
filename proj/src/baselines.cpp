#include "deconf/baselines.hpp"

#include <cmath>
#include <limits>

#include "deconf/error.hpp"

namespace deconf {

namespace {
constexpr double kRidge = 1e-8;
}

double BaselineResult::mean_defined_ate() const {
  double sum = 0.0;
  int count = 0;
  for (const PeriodAte& p : ate)
    if (p.defined) {
      sum += p.ate;
      ++count;
    }
  return count > 0 ? sum / count : 0.0;
}

BaselineResult naive_ate(const TrainingPanel& panel) {
  BaselineResult r;
  r.method = "naive";
  for (int t = 0; t < panel.T; ++t) {
    double treated_sum = 0.0, control_sum = 0.0;
    int treated_n = 0, control_n = 0;
    for (int u = 0; u < panel.n; ++u) {
      if (panel.c(t, u) != 0.0) {
        treated_sum += panel.y(t, u);
        ++treated_n;
      } else {
        control_sum += panel.y(t, u);
        ++control_n;
      }
    }
    PeriodAte p;
    p.period = t;
    if (treated_n > 0 && control_n > 0) {
      p.defined = true;
      p.ate = treated_sum / treated_n - control_sum / control_n;
    }
    r.ate.push_back(p);
  }
  return r;
}

std::vector<double> solve_spd(const Matrix& a, const std::vector<double>& b, double ridge) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n)
    throw DimensionError("solve_spd: matrix " + a.shape_str() + " vs rhs length " +
                         std::to_string(b.size()));
  Matrix chol(n, n);
  double max_diag = 0.0, min_diag = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    max_diag = std::max(max_diag, a(i, i) + ridge);
    min_diag = std::min(min_diag, a(i, i) + ridge);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j) + (i == j ? ridge : 0.0);
      for (int k = 0; k < j; ++k) s -= chol(i, k) * chol(j, k);
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s))
          throw NumericError("solve_spd: rank deficiency beyond ridge rescue at pivot " +
                             std::to_string(i) + " (diagonal condition estimate " +
                             std::to_string(max_diag / std::max(min_diag, 1e-300)) + ")");
        chol(i, i) = std::sqrt(s);
      } else {
        chol(i, j) = s / chol(j, j);
      }
    }
  }
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) s -= chol(i, k) * y[static_cast<std::size_t>(k)];
    y[static_cast<std::size_t>(i)] = s / chol(i, i);
  }
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    double s = y[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= chol(k, i) * x[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(i)] = s / chol(i, i);
  }
  return x;
}

BaselineResult outcome_regression(const TrainingPanel& panel, const SplitAssignment* split) {
  BaselineResult r;
  r.method = "regression";
  r.ite = Matrix(panel.n, panel.T);

  std::vector<int> fit_units, eval_units;
  if (split != nullptr) {
    fit_units = split->train;
    eval_units = split->test;
  } else {
    for (int u = 0; u < panel.n; ++u) fit_units.push_back(u);
    eval_units = fit_units;
  }
  const int d = panel.d_x;
  const int p = d + 2;  // intercept, covariates, treatment

  for (int t = 0; t < panel.T; ++t) {
    // normal equations over the fit units
    Matrix xtx(p, p);
    std::vector<double> xty(static_cast<std::size_t>(p));
    std::vector<double> row(static_cast<std::size_t>(p));
    for (int u : fit_units) {
      row[0] = 1.0;
      for (int k = 0; k < d; ++k) row[static_cast<std::size_t>(k + 1)] =
          panel.x[static_cast<std::size_t>(t)](u, k);
      row[static_cast<std::size_t>(p - 1)] = panel.c(t, u);
      for (int i = 0; i < p; ++i) {
        xty[static_cast<std::size_t>(i)] += row[static_cast<std::size_t>(i)] * panel.y(t, u);
        for (int j = 0; j <= i; ++j) xtx(i, j) += row[static_cast<std::size_t>(i)] * row[static_cast<std::size_t>(j)];
      }
    }
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j) xtx(i, j) = xtx(j, i);

    const std::vector<double> beta = solve_spd(xtx, xty, kRidge);
    const double treatment_coeff = beta[static_cast<std::size_t>(p - 1)];

    PeriodAte pa;
    pa.period = t;
    pa.defined = true;
    pa.ate = treatment_coeff;
    r.ate.push_back(pa);
    for (int u = 0; u < panel.n; ++u) r.ite(u, t) = treatment_coeff;

    double se = 0.0;
    for (int u : eval_units) {
      double y_hat = beta[0];
      for (int k = 0; k < d; ++k)
        y_hat += beta[static_cast<std::size_t>(k + 1)] * panel.x[static_cast<std::size_t>(t)](u, k);
      y_hat += treatment_coeff * panel.c(t, u);
      const double res = y_hat - panel.y(t, u);
      se += res * res;
    }
    r.rmse_per_period.push_back(std::sqrt(se / static_cast<double>(eval_units.size())));
  }

  for (double v : r.rmse_per_period) r.rmse += v;
  r.rmse /= static_cast<double>(panel.T);
  return r;
}

BaselineResult did(const TrainingPanel& panel) {
  BaselineResult r;
  r.method = "did";
  if (panel.T < 2) throw DataError("did requires at least two periods");

  PeriodAte first;
  first.period = 0;
  r.ate.push_back(first);  // no delta before the first period

  for (int t = 1; t < panel.T; ++t) {
    double treated_sum = 0.0, control_sum = 0.0;
    int treated_n = 0, control_n = 0;
    for (int u = 0; u < panel.n; ++u) {
      const double delta = panel.y(t, u) - panel.y(t - 1, u);
      if (panel.c(t, u) != panel.c(t - 1, u)) ++r.membership_changes;
      if (panel.c(t, u) != 0.0) {
        treated_sum += delta;
        ++treated_n;
      } else {
        control_sum += delta;
        ++control_n;
      }
    }
    PeriodAte p;
    p.period = t;
    if (treated_n > 0 && control_n > 0) {
      p.defined = true;
      p.ate = treated_sum / treated_n - control_sum / control_n;
    }
    r.ate.push_back(p);
  }
  return r;
}

}  // namespace deconf
