#include <doctest.h>

#include <cmath>

#include "deconf/baselines.hpp"
#include "deconf/error.hpp"
#include "deconf/rng.hpp"
#include "oracles.hpp"

using namespace deconf;

namespace {

TrainingPanel blank_panel(int n, int T, int d_x) {
  TrainingPanel p;
  p.n = n;
  p.T = T;
  p.d_x = d_x;
  for (int u = 0; u < n; ++u) p.unit_ids.push_back("u" + std::to_string(u));
  p.c = Matrix(T, n);
  p.y = Matrix(T, n);
  p.x.assign(static_cast<std::size_t>(T), Matrix(n, d_x));
  p.final_confirmed.assign(static_cast<std::size_t>(n), 1.0);
  return p;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("naive ate is the difference of group means") {
  TrainingPanel p = blank_panel(4, 1, 1);
  p.c(0, 0) = 1.0;
  p.c(0, 1) = 1.0;
  p.y(0, 0) = 10.0;
  p.y(0, 1) = 20.0;
  p.y(0, 2) = 5.0;
  p.y(0, 3) = 5.0;
  const BaselineResult r = naive_ate(p);
  REQUIRE(r.ate.size() == 1);
  CHECK(r.ate[0].defined);
  CHECK(r.ate[0].ate == doctest::Approx(10.0));
}

TEST_CASE("identical outcome distributions give a zero naive estimate") {
  TrainingPanel p = blank_panel(4, 1, 1);
  p.c(0, 0) = 1.0;
  p.c(0, 1) = 1.0;
  for (int u = 0; u < 4; ++u) p.y(0, u) = 7.5;
  CHECK(naive_ate(p).ate[0].ate == doctest::Approx(0.0));
}

TEST_CASE("naive ate marks one-group periods as missing") {
  TrainingPanel p = blank_panel(3, 2, 1);
  for (int u = 0; u < 3; ++u) p.c(0, u) = 1.0;  // nobody controlled in period 0
  p.c(1, 0) = 1.0;
  const BaselineResult r = naive_ate(p);
  CHECK_FALSE(r.ate[0].defined);
  CHECK(r.ate[1].defined);
}

TEST_CASE("naive ate is shift equivariant within a period") {
  Rng rng(3);
  TrainingPanel p = blank_panel(10, 2, 1);
  for (int t = 0; t < 2; ++t)
    for (int u = 0; u < 10; ++u) {
      p.c(t, u) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
      p.y(t, u) = rng.uniform(0, 50);
    }
  p.c(0, 0) = 1.0;
  p.c(0, 1) = 0.0;  // both groups nonempty
  const BaselineResult before = naive_ate(p);
  for (int u = 0; u < 10; ++u) p.y(0, u) += 123.0;
  const BaselineResult after = naive_ate(p);
  CHECK(after.ate[0].ate == doctest::Approx(before.ate[0].ate).epsilon(1e-12));
}

TEST_CASE("regression recovers an exact linear treatment effect") {
  Rng rng(5);
  TrainingPanel p = blank_panel(200, 1, 2);
  for (int u = 0; u < 200; ++u) {
    p.c(0, u) = u % 2 == 0 ? 1.0 : 0.0;
    p.x[0](u, 0) = rng.uniform(-1, 1);
    p.x[0](u, 1) = rng.uniform(-1, 1);
    p.y(0, u) = 3.0 * p.c(0, u);  // covariates are pure noise
  }
  const BaselineResult r = outcome_regression(p);
  CHECK(std::abs(r.ate[0].ate - 3.0) < 1e-9);
  CHECK(r.rmse < 1e-7);
}

TEST_CASE("regression coefficient shrinks when treatment is independent of Y given X") {
  Rng rng(7);
  TrainingPanel p = blank_panel(2000, 1, 1);
  for (int u = 0; u < 2000; ++u) {
    p.x[0](u, 0) = rng.normal();
    p.c(0, u) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    p.y(0, u) = 2.0 * p.x[0](u, 0) + rng.normal();
  }
  const BaselineResult r = outcome_regression(p);
  // consistency: the coefficient of C is near zero at this sample size
  CHECK(std::abs(r.ate[0].ate) < 0.15);
}

TEST_CASE("regression matches the normal-equations oracle on a tiny system") {
  // three units, one covariate: solvable by hand via (D^T D) beta = D^T y
  TrainingPanel p = blank_panel(3, 1, 1);
  const double x[3] = {0.0, 1.0, 2.0};
  const double c[3] = {0.0, 1.0, 1.0};
  const double y[3] = {1.0, 4.0, 6.0};
  for (int u = 0; u < 3; ++u) {
    p.x[0](u, 0) = x[u];
    p.c(0, u) = c[u];
    p.y(0, u) = y[u];
  }
  Matrix dtd(3, 3);
  std::vector<double> dty(3, 0.0);
  for (int u = 0; u < 3; ++u) {
    const double row[3] = {1.0, x[u], c[u]};
    for (int i = 0; i < 3; ++i) {
      dty[static_cast<std::size_t>(i)] += row[i] * y[u];
      for (int j = 0; j < 3; ++j) dtd(i, j) += row[i] * row[j];
    }
  }
  for (int i = 0; i < 3; ++i) dtd(i, i) += 1e-8;  // same damping as the implementation
  const std::vector<double> beta = oracle::solve(dtd, dty);
  const BaselineResult r = outcome_regression(p);
  CHECK(r.ate[0].ate == doctest::Approx(beta[2]).epsilon(1e-9));
  // potential outcomes by toggling C differ by exactly the coefficient
  CHECK(r.ite(0, 0) == doctest::Approx(beta[2]).epsilon(1e-9));
}

TEST_CASE("regression estimate ignores outcome terms that are linear in X") {
  Rng rng(11);
  TrainingPanel p = blank_panel(60, 1, 2);
  for (int u = 0; u < 60; ++u) {
    p.x[0](u, 0) = rng.uniform(-2, 2);
    p.x[0](u, 1) = rng.uniform(-2, 2);
    p.c(0, u) = u % 3 == 0 ? 1.0 : 0.0;
    p.y(0, u) = 2.5 * p.c(0, u) + 0.5 * p.x[0](u, 0) - 1.5 * p.x[0](u, 1);
  }
  const BaselineResult base = outcome_regression(p);
  TrainingPanel shifted = p;
  for (int u = 0; u < 60; ++u)
    shifted.y(0, u) += 4.0 * shifted.x[0](u, 0) + 2.0 * shifted.x[0](u, 1);
  const BaselineResult moved = outcome_regression(shifted);
  CHECK(moved.ate[0].ate == doctest::Approx(base.ate[0].ate).epsilon(1e-7));
}

TEST_CASE("regression reports rank deficiency past the ridge rescue") {
  // a duplicated covariate keeps the ridge solvable; a NaN input does not
  TrainingPanel p = blank_panel(5, 1, 1);
  for (int u = 0; u < 5; ++u) {
    p.x[0](u, 0) = std::numeric_limits<double>::quiet_NaN();
    p.y(0, u) = 1.0;
  }
  p.c(0, 0) = 1.0;
  CHECK_THROWS_AS(outcome_regression(p), NumericError);
}

TEST_CASE("did matches the textbook four-cell difference on a 2x2 panel") {
  TrainingPanel p = blank_panel(2, 2, 1);
  // unit 0 becomes treated in period 1; unit 1 never treated
  p.c(1, 0) = 1.0;
  p.y(0, 0) = 10.0;
  p.y(1, 0) = 18.0;
  p.y(0, 1) = 8.0;
  p.y(1, 1) = 11.0;
  const BaselineResult r = did(p);
  REQUIRE(r.ate.size() == 2);
  CHECK_FALSE(r.ate[0].defined);
  CHECK(r.ate[1].defined);
  // (18-10) - (11-8) = 5
  CHECK(r.ate[1].ate == doctest::Approx(5.0));
  CHECK(r.membership_changes == 1);
}

TEST_CASE("did cancels unit fixed effects exactly") {
  Rng rng(13);
  TrainingPanel p = blank_panel(12, 4, 1);
  for (int t = 0; t < 4; ++t)
    for (int u = 0; u < 12; ++u) {
      p.c(t, u) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
      p.y(t, u) = rng.uniform(0, 30);
    }
  p.c(1, 0) = 1.0;
  p.c(1, 1) = 0.0;
  const BaselineResult before = did(p);
  for (int u = 0; u < 12; ++u) {
    const double offset = rng.uniform(-40, 40);
    for (int t = 0; t < 4; ++t) p.y(t, u) += offset;  // per-unit constant
  }
  const BaselineResult after = did(p);
  for (int t = 1; t < 4; ++t) {
    REQUIRE(before.ate[static_cast<std::size_t>(t)].defined ==
            after.ate[static_cast<std::size_t>(t)].defined);
    if (before.ate[static_cast<std::size_t>(t)].defined)
      CHECK(after.ate[static_cast<std::size_t>(t)].ate ==
            doctest::Approx(before.ate[static_cast<std::size_t>(t)].ate).epsilon(1e-10));
  }
}

TEST_CASE("did recovers a step effect under parallel trends") {
  // independent per-period treatment, additive unit and time effects
  Rng rng(17);
  const double tau = 10.0;
  double total = 0.0;
  int estimates = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng r(static_cast<std::uint64_t>(seed) + 100);
    TrainingPanel p = blank_panel(60, 6, 1);
    std::vector<double> unit_effect(60);
    for (double& v : unit_effect) v = r.normal(0.0, 5.0);
    for (int t = 0; t < 6; ++t) {
      const double time_effect = r.normal(0.0, 3.0);
      for (int u = 0; u < 60; ++u) {
        p.c(t, u) = r.uniform01() < 0.5 ? 1.0 : 0.0;
        p.y(t, u) = 50.0 + unit_effect[static_cast<std::size_t>(u)] + time_effect +
                    tau * p.c(t, u) + r.normal(0.0, 1.0);
      }
    }
    const BaselineResult res = did(p);
    for (const PeriodAte& a : res.ate)
      if (a.defined) {
        total += a.ate;
        ++estimates;
      }
  }
  const double mean = total / estimates;
  CHECK(std::abs(mean - tau) < 0.5);  // well within sampling noise at this count
  (void)rng;
}

TEST_CASE("solve_spd agrees with Gaussian elimination") {
  Rng rng(19);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 4;
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(i, j) = rng.uniform(-1, 1);
    const Matrix spd = add(multiply_at_b(b, b), scale(Matrix::identity(n), 0.5));
    std::vector<double> rhs(static_cast<std::size_t>(n));
    for (double& v : rhs) v = rng.uniform(-2, 2);
    const std::vector<double> x = solve_spd(spd, rhs, 0.0);
    const std::vector<double> expected = oracle::solve(spd, rhs);
    for (int i = 0; i < n; ++i)
      CHECK(x[static_cast<std::size_t>(i)] ==
            doctest::Approx(expected[static_cast<std::size_t>(i)]).epsilon(1e-9));
  }
}

}  // TEST_SUITE
