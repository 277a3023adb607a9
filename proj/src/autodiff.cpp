#include "deconf/autodiff.hpp"

#include <cmath>
#include <utility>

#include "deconf/error.hpp"

namespace deconf {

int Var::rows() const { return tape->value(*this).rows(); }
int Var::cols() const { return tape->value(*this).cols(); }
const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_scalar(double value) { return constant(Matrix(1, 1, value)); }

Var Tape::param(const std::string& name, const Matrix& value) {
  if (params_.count(name))
    throw ConfigError("parameter '" + name + "' registered twice on one tape");
  Node n;
  n.op = Op::kParam;
  n.value = value;
  n.needs_grad = true;
  Var v = push(std::move(n));
  params_[name] = v.id;
  return v;
}

namespace {

Matrix map_unary(const Matrix& a, double (*f)(double)) {
  Matrix out = a;
  for (double* p = out.data(); p != out.data() + out.size(); ++p) *p = f(*p);
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

#define DECONF_BINARY(name, opkind, kernel)                       \
  Var Tape::name(Var a, Var b) {                                  \
    check_same_shape(#name, at(a.id).value, at(b.id).value);      \
    Node n;                                                       \
    n.op = opkind;                                                \
    n.a = a.id;                                                   \
    n.b = b.id;                                                   \
    n.needs_grad = at(a.id).needs_grad || at(b.id).needs_grad;    \
    n.value = kernel(at(a.id).value, at(b.id).value);             \
    return push(std::move(n));                                    \
  }

DECONF_BINARY(add, Op::kAdd, deconf::add)
DECONF_BINARY(sub, Op::kSub, deconf::subtract)
DECONF_BINARY(mul, Op::kMul, deconf::hadamard)
#undef DECONF_BINARY

Var Tape::div(Var a, Var b) {
  check_same_shape("div", at(a.id).value, at(b.id).value);
  Node n;
  n.op = Op::kDiv;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = at(a.id).needs_grad || at(b.id).needs_grad;
  Matrix out = at(a.id).value;
  const double* pb = at(b.id).value.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] /= pb[i];
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::neg(Var a) {
  Node n;
  n.op = Op::kNeg;
  n.a = a.id;
  n.needs_grad = at(a.id).needs_grad;
  n.value = deconf::scale(at(a.id).value, -1.0);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = at(a.id).needs_grad || at(b.id).needs_grad;
  n.value = deconf::multiply(at(a.id).value, at(b.id).value);
  return push(std::move(n));
}

#define DECONF_UNARY(name, opkind, expr)            \
  Var Tape::name(Var a) {                           \
    Node n;                                         \
    n.op = opkind;                                  \
    n.a = a.id;                                     \
    n.needs_grad = at(a.id).needs_grad;             \
    n.value = expr;                                 \
    return push(std::move(n));                      \
  }

DECONF_UNARY(relu, Op::kRelu, deconf::relu(at(a.id).value))
DECONF_UNARY(sigmoid, Op::kSigmoid, map_unary(at(a.id).value, stable_sigmoid))
DECONF_UNARY(tanh, Op::kTanh, map_unary(at(a.id).value, [](double x) { return std::tanh(x); }))
DECONF_UNARY(exp, Op::kExp, map_unary(at(a.id).value, [](double x) { return std::exp(x); }))
DECONF_UNARY(log, Op::kLog, map_unary(at(a.id).value, [](double x) { return std::log(x); }))
DECONF_UNARY(sqrt, Op::kSqrt, map_unary(at(a.id).value, [](double x) { return std::sqrt(x); }))
DECONF_UNARY(square, Op::kSquare, map_unary(at(a.id).value, [](double x) { return x * x; }))
DECONF_UNARY(transpose, Op::kTranspose, deconf::transpose(at(a.id).value))
#undef DECONF_UNARY

Var Tape::clamp(Var a, double lo, double hi) {
  Node n;
  n.op = Op::kClamp;
  n.a = a.id;
  n.s0 = lo;
  n.s1 = hi;
  n.needs_grad = at(a.id).needs_grad;
  Matrix out = at(a.id).value;
  for (double* p = out.data(); p != out.data() + out.size(); ++p) {
    if (*p < lo) *p = lo;
    if (*p > hi) *p = hi;
  }
  n.value = std::move(out);
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  Node n;
  n.op = Op::kConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = at(a.id).needs_grad || at(b.id).needs_grad;
  n.value = deconf::concat_cols(at(a.id).value, at(b.id).value);
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, int col_begin, int col_end) {
  Node n;
  n.op = Op::kSliceCols;
  n.a = a.id;
  n.i0 = col_begin;
  n.i1 = col_end;
  n.needs_grad = at(a.id).needs_grad;
  n.value = deconf::slice_cols(at(a.id).value, col_begin, col_end);
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  Node n;
  n.op = Op::kGatherRows;
  n.a = a.id;
  n.needs_grad = at(a.id).needs_grad;
  n.value = deconf::gather_rows(at(a.id).value, rows);
  n.index = std::move(rows);
  return push(std::move(n));
}

Var Tape::reduce_sum(Var a) {
  Node n;
  n.op = Op::kReduceSum;
  n.a = a.id;
  n.needs_grad = at(a.id).needs_grad;
  n.value = Matrix(1, 1, sum_all(at(a.id).value));
  return push(std::move(n));
}

Var Tape::reduce_mean(Var a) {
  const Matrix& v = at(a.id).value;
  if (v.size() == 0) throw DimensionError("reduce_mean of empty matrix");
  Node n;
  n.op = Op::kReduceMean;
  n.a = a.id;
  n.needs_grad = at(a.id).needs_grad;
  n.value = Matrix(1, 1, sum_all(v) / static_cast<double>(v.size()));
  return push(std::move(n));
}

Var Tape::mul_scalar(Var a, double s) {
  Node n;
  n.op = Op::kMulScalar;
  n.a = a.id;
  n.s0 = s;
  n.needs_grad = at(a.id).needs_grad;
  n.value = deconf::scale(at(a.id).value, s);
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double s) {
  Node n;
  n.op = Op::kAddScalar;
  n.a = a.id;
  n.s0 = s;
  n.needs_grad = at(a.id).needs_grad;
  Matrix out = at(a.id).value;
  for (double* p = out.data(); p != out.data() + out.size(); ++p) *p += s;
  n.value = std::move(out);
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const { return at(v.id).value; }

Matrix Tape::grad(Var v) const {
  const Node& n = at(v.id);
  if (n.adjoint.empty() && n.value.size() != 0) return Matrix(n.value.rows(), n.value.cols());
  return n.adjoint;
}

std::map<std::string, Matrix> Tape::param_grads() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, id] : params_) out[name] = grad(Var{const_cast<Tape*>(this), id});
  return out;
}

void Tape::reset() {
  nodes_.clear();
  params_.clear();
}

void Tape::backward(Var loss) {
  Node& top = at(loss.id);
  if (top.value.rows() != 1 || top.value.cols() != 1)
    throw DimensionError("backward requires a 1x1 loss, got " + top.value.shape_str());
  for (Node& n : nodes_) n.adjoint = Matrix();
  top.adjoint = Matrix(1, 1, 1.0);

  // First contribution moves straight in; later ones accumulate in place.
  auto accumulate = [&](int id, Matrix g) {
    Node& n = at(id);
    if (n.adjoint.empty()) {
      n.adjoint = std::move(g);
      return;
    }
    double* pa = n.adjoint.data();
    const double* pg = g.data();
    for (std::size_t i = 0; i < n.adjoint.size(); ++i) pa[i] += pg[i];
  };

  for (int id = loss.id; id >= 0; --id) {
    Node& n = at(id);
    if (!n.needs_grad || n.adjoint.empty()) continue;
    const Matrix& g = n.adjoint;
    switch (n.op) {
      case Op::kConst:
      case Op::kParam:
        break;
      case Op::kAdd:
        if (at(n.a).needs_grad) accumulate(n.a, g);
        if (at(n.b).needs_grad) accumulate(n.b, g);
        break;
      case Op::kSub:
        if (at(n.a).needs_grad) accumulate(n.a, g);
        if (at(n.b).needs_grad) accumulate(n.b, deconf::scale(g, -1.0));
        break;
      case Op::kMul:
        if (at(n.a).needs_grad) accumulate(n.a, hadamard(g, at(n.b).value));
        if (at(n.b).needs_grad) accumulate(n.b, hadamard(g, at(n.a).value));
        break;
      case Op::kDiv: {
        const Matrix& vb = at(n.b).value;
        if (at(n.a).needs_grad) {
          Matrix ga = g;
          const double* pb = vb.data();
          double* p = ga.data();
          for (std::size_t i = 0; i < ga.size(); ++i) p[i] /= pb[i];
          accumulate(n.a, ga);
        }
        if (at(n.b).needs_grad) {
          // d(a/b)/db = -a/b^2 = -out/b
          Matrix gb = hadamard(g, n.value);
          const double* pb = vb.data();
          double* p = gb.data();
          for (std::size_t i = 0; i < gb.size(); ++i) p[i] = -p[i] / pb[i];
          accumulate(n.b, gb);
        }
        break;
      }
      case Op::kNeg:
        accumulate(n.a, deconf::scale(g, -1.0));
        break;
      case Op::kMatMul:
        if (at(n.a).needs_grad) accumulate(n.a, multiply_a_bt(g, at(n.b).value));
        if (at(n.b).needs_grad) accumulate(n.b, multiply_at_b(at(n.a).value, g));
        break;
      case Op::kRelu: {
        Matrix ga = g;
        const double* pv = at(n.a).value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i)
          if (pv[i] <= 0.0) p[i] = 0.0;  // subgradient at 0 is 0
        accumulate(n.a, ga);
        break;
      }
      case Op::kSigmoid: {
        Matrix ga = g;
        const double* ps = n.value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i) p[i] *= ps[i] * (1.0 - ps[i]);
        accumulate(n.a, ga);
        break;
      }
      case Op::kTanh: {
        Matrix ga = g;
        const double* pt = n.value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i) p[i] *= 1.0 - pt[i] * pt[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::kExp:
        accumulate(n.a, hadamard(g, n.value));
        break;
      case Op::kLog: {
        Matrix ga = g;
        const double* pv = at(n.a).value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i) p[i] /= pv[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::kSqrt: {
        Matrix ga = g;
        const double* po = n.value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i) p[i] *= 0.5 / po[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::kSquare: {
        Matrix ga = g;
        const double* pv = at(n.a).value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i) p[i] *= 2.0 * pv[i];
        accumulate(n.a, ga);
        break;
      }
      case Op::kClamp: {
        Matrix ga = g;
        const double* pv = at(n.a).value.data();
        double* p = ga.data();
        for (std::size_t i = 0; i < ga.size(); ++i)
          if (pv[i] <= n.s0 || pv[i] >= n.s1) p[i] = 0.0;
        accumulate(n.a, ga);
        break;
      }
      case Op::kConcatCols: {
        const int ca = at(n.a).value.cols();
        if (at(n.a).needs_grad) accumulate(n.a, deconf::slice_cols(g, 0, ca));
        if (at(n.b).needs_grad) accumulate(n.b, deconf::slice_cols(g, ca, g.cols()));
        break;
      }
      case Op::kSliceCols: {
        Matrix ga(at(n.a).value.rows(), at(n.a).value.cols());
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) ga(i, n.i0 + j) = g(i, j);
        accumulate(n.a, ga);
        break;
      }
      case Op::kGatherRows: {
        Matrix ga(at(n.a).value.rows(), at(n.a).value.cols());
        for (int i = 0; i < g.rows(); ++i) {
          const int r = n.index[static_cast<std::size_t>(i)];
          for (int j = 0; j < g.cols(); ++j) ga(r, j) += g(i, j);
        }
        accumulate(n.a, ga);
        break;
      }
      case Op::kTranspose:
        accumulate(n.a, deconf::transpose(g));
        break;
      case Op::kReduceSum:
        accumulate(n.a, Matrix(at(n.a).value.rows(), at(n.a).value.cols(), g(0, 0)));
        break;
      case Op::kReduceMean:
        accumulate(n.a, Matrix(at(n.a).value.rows(), at(n.a).value.cols(),
                               g(0, 0) / static_cast<double>(at(n.a).value.size())));
        break;
      case Op::kMulScalar:
        accumulate(n.a, deconf::scale(g, n.s0));
        break;
      case Op::kAddScalar:
        accumulate(n.a, g);
        break;
    }
  }
}

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
Var operator/(Var a, Var b) { return a.tape->div(a, b); }
Var operator-(Var a) { return a.tape->neg(a); }

}  // namespace deconf
