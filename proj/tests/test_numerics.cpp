#include <doctest.h>

#include <cmath>

#include "deconf/autodiff.hpp"
#include "deconf/error.hpp"
#include "deconf/gradcheck.hpp"
#include "deconf/matrix.hpp"
#include "deconf/optimizer.hpp"
#include "deconf/rng.hpp"
#include "oracles.hpp"

using namespace deconf;

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols, double lo = -2.0, double hi = 2.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("matmul identity and dot product") {
  const Matrix id = Matrix::identity(2);
  const Matrix b = Matrix::from_rows({{3, 4}, {5, 6}});
  CHECK(max_abs_diff(multiply(id, b), b) == 0.0);

  const Matrix row = Matrix::from_rows({{1, 2}});
  const Matrix col = Matrix::from_rows({{3}, {4}});
  const Matrix prod = multiply(row, col);
  CHECK(prod.rows() == 1);
  CHECK(prod.cols() == 1);
  CHECK(prod(0, 0) == doctest::Approx(11.0));
}

TEST_CASE("matmul matches triple-loop reference") {
  Rng rng(42);
  const Matrix a = random_matrix(rng, 5, 7);
  const Matrix b = random_matrix(rng, 7, 3);
  CHECK(max_abs_diff(multiply(a, b), oracle::matmul(a, b)) < 1e-12);
  CHECK(max_abs_diff(multiply_at_b(transpose(a), b), oracle::matmul(a, b)) < 1e-12);
  CHECK(max_abs_diff(multiply_a_bt(a, transpose(b)), oracle::matmul(a, b)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  const Matrix a(5, 7);
  const Matrix b(8, 3);
  CHECK_THROWS_WITH_AS(multiply(a, b), doctest::Contains("5x7"), DimensionError);
  CHECK_THROWS_WITH_AS(multiply(a, b), doctest::Contains("8x3"), DimensionError);
}

TEST_CASE("matmul associativity on random triples") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(rng, 4, 6);
    const Matrix b = random_matrix(rng, 6, 5);
    const Matrix c = random_matrix(rng, 5, 3);
    const Matrix left = multiply(multiply(a, b), c);
    const Matrix right = multiply(a, multiply(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double denom = std::max(1.0, std::abs(left.data()[i]));
      CHECK(std::abs(left.data()[i] - right.data()[i]) / denom < 1e-9);
    }
  }
}

TEST_CASE("relu sign cases") {
  const Matrix in = Matrix::from_rows({{-1, 0, 2}});
  const Matrix out = relu(in);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(0, 2) == 2.0);

  Rng rng(3);
  const Matrix all_neg = random_matrix(rng, 3, 4, -5.0, -0.1);
  CHECK(relu(all_neg).max_abs() == 0.0);

  const Matrix r = random_matrix(rng, 6, 6);
  const Matrix rr = relu(r);
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(rr.data()[i] == (r.data()[i] > 0.0 ? r.data()[i] : 0.0));
}

TEST_CASE("concat_cols layouts") {
  const Matrix empty_left(2, 0);
  const Matrix right = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(max_abs_diff(concat_cols(empty_left, right), right) == 0.0);

  const Matrix a = Matrix::from_rows({{1}, {2}});
  const Matrix b = Matrix::from_rows({{3}, {4}});
  CHECK(max_abs_diff(concat_cols(a, b), Matrix::from_rows({{1, 3}, {2, 4}})) == 0.0);

  const Matrix wide = concat_cols(Matrix(391, 19), Matrix(391, 50));
  CHECK(wide.rows() == 391);
  CHECK(wide.cols() == 69);

  CHECK_THROWS_AS(concat_cols(Matrix(2, 1), Matrix(3, 1)), DimensionError);
}

TEST_CASE("concat then slice recovers both inputs exactly") {
  Rng rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const int rows = 1 + rng.uniform_int(0, 6);
    const int ca = rng.uniform_int(0, 4);
    const int cb = 1 + rng.uniform_int(0, 4);
    const Matrix a = random_matrix(rng, rows, ca);
    const Matrix b = random_matrix(rng, rows, cb);
    const Matrix joined = concat_cols(a, b);
    CHECK(max_abs_diff(slice_cols(joined, 0, ca), a) == 0.0);
    CHECK(max_abs_diff(slice_cols(joined, ca, ca + cb), b) == 0.0);
  }
}

TEST_CASE("tape gradients match central differences per primitive") {
  Rng rng(19);
  // every builder maps two parameter matrices to a scalar, with inputs kept
  // away from relu/clamp kinks
  struct NamedBuilder {
    const char* name;
    Var (*build)(Tape&, Var, Var);
  };
  const NamedBuilder builders[] = {
      {"add", [](Tape& t, Var a, Var b) { return t.reduce_sum(t.add(a, b)); }},
      {"sub", [](Tape& t, Var a, Var b) { return t.reduce_sum(t.sub(a, b)); }},
      {"mul", [](Tape& t, Var a, Var b) { return t.reduce_sum(t.mul(a, b)); }},
      {"div",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.div(a, t.add_scalar(t.square(b), 1.0)));
       }},
      {"matmul", [](Tape& t, Var a, Var b) { return t.reduce_sum(t.matmul(a, t.transpose(b))); }},
      {"relu_shifted",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.relu(t.add_scalar(t.square(a), 0.5))) + t.reduce_sum(b);
       }},
      {"sigmoid",
       [](Tape& t, Var a, Var b) { return t.reduce_sum(t.sigmoid(a)) + t.reduce_sum(b); }},
      {"tanh", [](Tape& t, Var a, Var b) { return t.reduce_sum(t.tanh(a)) + t.reduce_sum(b); }},
      {"exp", [](Tape& t, Var a, Var b) { return t.reduce_sum(t.exp(a)) + t.reduce_sum(b); }},
      {"log",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.log(t.add_scalar(t.square(a), 1.0))) + t.reduce_sum(b);
       }},
      {"sqrt",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.sqrt(t.add_scalar(t.square(a), 1.0))) + t.reduce_sum(b);
       }},
      {"square",
       [](Tape& t, Var a, Var b) { return t.reduce_sum(t.square(a)) + t.reduce_sum(b); }},
      {"clamp_interior",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.clamp(t.sigmoid(a), 1e-6, 1.0 - 1e-6)) + t.reduce_sum(b);
       }},
      {"concat_slice",
       [](Tape& t, Var a, Var b) {
         Var j = t.concat_cols(a, b);
         return t.reduce_sum(t.square(t.slice_cols(j, 1, 4)));
       }},
      {"gather",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.square(t.gather_rows(a, {2, 0, 2}))) + t.reduce_sum(b);
       }},
      {"transpose",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.matmul(t.transpose(a), a)) + t.reduce_sum(b);
       }},
      {"reduce_mean",
       [](Tape& t, Var a, Var b) { return t.reduce_mean(t.square(a)) + t.reduce_mean(b); }},
      {"scalar_ops",
       [](Tape& t, Var a, Var b) {
         return t.reduce_sum(t.add_scalar(t.mul_scalar(a, 1.7), 0.3)) + t.reduce_sum(t.neg(b));
       }},
  };

  for (const auto& nb : builders) {
    CAPTURE(nb.name);
    Matrix pa = random_matrix(rng, 3, 3, 0.2, 1.5);
    Matrix pb = random_matrix(rng, 3, 3, 0.2, 1.5);
    auto loss = [&]() {
      Tape tape;
      Var a = tape.param("a", pa);
      Var b = tape.param("b", pb);
      return nb.build(tape, a, b).value()(0, 0);
    };
    auto grads = [&]() {
      Tape tape;
      Var a = tape.param("a", pa);
      Var b = tape.param("b", pb);
      Var l = nb.build(tape, a, b);
      tape.backward(l);
      return tape.param_grads();
    };
    const GradCheckReport report =
        finite_diff_check(loss, grads, {{"a", &pa}, {"b", &pb}}, GradCheckConfig{});
    CHECK_MESSAGE(report.max_rel_error < 1e-6, nb.name, " worst tensor ", report.worst_tensor,
                  " analytic ", report.worst_analytic, " numeric ", report.worst_numeric);
  }
}

TEST_CASE("gradient of |Wx|^2 matches the closed form") {
  Rng rng(23);
  Matrix w = random_matrix(rng, 4, 3);
  const Matrix x = random_matrix(rng, 3, 1);

  Tape tape;
  Var wv = tape.param("w", w);
  Var wx = tape.matmul(wv, tape.constant(x));
  tape.backward(tape.reduce_sum(tape.square(wx)));

  // d/dW |Wx|^2 = 2 (Wx) x^T
  const Matrix expected = scale(multiply(multiply(w, x), transpose(x)), 2.0);
  CHECK(max_abs_diff(tape.grad(wv), expected) < 1e-9);

  auto loss = [&]() {
    Tape t2;
    Var w2 = t2.param("w", w);
    return t2.reduce_sum(t2.square(t2.matmul(w2, t2.constant(x)))).value()(0, 0);
  };
  auto grads = [&]() {
    Tape t2;
    Var w2 = t2.param("w", w);
    Var l = t2.reduce_sum(t2.square(t2.matmul(w2, t2.constant(x))));
    t2.backward(l);
    return t2.param_grads();
  };
  const GradCheckReport report = finite_diff_check(loss, grads, {{"w", &w}}, GradCheckConfig{});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("finite_diff_check on a linear loss reports near-zero error") {
  Rng rng(29);
  Matrix p = random_matrix(rng, 4, 5, -1.0, 1.0);
  auto loss = [&]() {
    double s = 0.0;
    for (double v : p.values()) s += v;
    return s;
  };
  auto grads = [&]() {
    GradientSet g;
    g["p"] = Matrix(4, 5, 1.0);
    return g;
  };
  const GradCheckReport report = finite_diff_check(loss, grads, {{"p", &p}}, GradCheckConfig{});
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("finite_diff_check rejects non-finite losses") {
  Matrix p(1, 1, 1.0);
  auto loss = [&]() { return std::log(-1.0); };
  auto grads = [&]() {
    GradientSet g;
    g["p"] = Matrix(1, 1);
    return g;
  };
  CHECK_THROWS_AS(finite_diff_check(loss, grads, {{"p", &p}}, GradCheckConfig{}), NumericError);
}

TEST_CASE("backward produces shape-matched parameter gradients") {
  Rng rng(31);
  Matrix a = random_matrix(rng, 2, 5);
  Matrix b = random_matrix(rng, 5, 3);
  Tape tape;
  Var av = tape.param("a", a);
  Var bv = tape.param("b", b);
  tape.backward(tape.reduce_sum(tape.matmul(av, bv)));
  const GradientSet grads = tape.param_grads();
  CHECK(grads.at("a").same_shape(a));
  CHECK(grads.at("b").same_shape(b));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Matrix p = Matrix::from_rows({{1.0, -2.0}, {0.5, 3.0}});
  const Matrix before = p;
  AdamState adam(AdamConfig{});
  GradientSet grads;
  grads["p"] = Matrix(2, 2);
  for (int i = 0; i < 5; ++i) adam.step({{"p", &p}}, grads);
  CHECK(max_abs_diff(p, before) == 0.0);
  CHECK(adam.steps() == 5);
}

TEST_CASE("adam first step magnitude equals the learning rate") {
  Matrix p(1, 1, 0.0);
  AdamState adam(AdamConfig{0.1, 0.9, 0.999, 1e-8});
  GradientSet grads;
  grads["p"] = Matrix(1, 1, 1.0);
  adam.step({{"p", &p}}, grads);
  CHECK(p(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam descends the scalar parabola") {
  Matrix p(1, 1, 1.0);
  AdamState adam(AdamConfig{3e-3, 0.9, 0.999, 1e-8});
  double prev = std::abs(p(0, 0));
  for (int step = 0; step < 10; ++step) {
    GradientSet grads;
    grads["p"] = Matrix(1, 1, 2.0 * p(0, 0));
    adam.step({{"p", &p}}, grads);
    const double now = std::abs(p(0, 0));
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adam requires a gradient for every parameter") {
  Matrix p(2, 2, 1.0);
  AdamState adam(AdamConfig{});
  GradientSet grads;
  CHECK_THROWS_AS(adam.step({{"p", &p}}, grads), DataError);
}

TEST_CASE("adam applies the L2 term as 2 lambda theta") {
  Matrix with_l2(1, 1, 1.0);
  Matrix manual(1, 1, 1.0);
  AdamState adam_a(AdamConfig{});
  AdamState adam_b(AdamConfig{});
  GradientSet zero;
  zero["p"] = Matrix(1, 1, 0.0);
  adam_a.step({{"p", &with_l2}}, zero, 0.01);
  GradientSet manual_grad;
  manual_grad["p"] = Matrix(1, 1, 2.0 * 0.01 * 1.0);
  adam_b.step({{"p", &manual}}, manual_grad, 0.0);
  CHECK(with_l2(0, 0) == doctest::Approx(manual(0, 0)).epsilon(1e-12));
}

}  // TEST_SUITE
