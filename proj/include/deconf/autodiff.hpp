#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deconf/matrix.hpp"

namespace deconf {

class Tape;

/// Handle to one node of a tape. Cheap to copy; valid until Tape::reset().
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  int rows() const;
  int cols() const;
  const Matrix& value() const;
};

/// Recording tape for reverse-mode differentiation over a fixed primitive
/// set. One tape per training step; single-threaded by design. backward()
/// visits nodes in exact reverse order of recording, and every registered
/// parameter receives a gradient of identical shape.
class Tape {
 public:
  enum class Op : std::uint8_t {
    kConst,
    kParam,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kMatMul,
    kRelu,
    kSigmoid,
    kTanh,
    kExp,
    kLog,
    kSqrt,
    kSquare,
    kClamp,
    kConcatCols,
    kSliceCols,
    kGatherRows,
    kTranspose,
    kReduceSum,
    kReduceMean,
    kMulScalar,
    kAddScalar,
  };

  Var constant(Matrix value);
  Var constant_scalar(double value);
  /// Registers a differentiable leaf. Names must be unique per tape.
  Var param(const std::string& name, const Matrix& value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var matmul(Var a, Var b);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var clamp(Var a, double lo, double hi);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, int col_begin, int col_end);
  Var gather_rows(Var a, std::vector<int> rows);
  Var transpose(Var a);
  Var reduce_sum(Var a);   // 1x1
  Var reduce_mean(Var a);  // 1x1
  Var mul_scalar(Var a, double s);
  Var add_scalar(Var a, double s);

  /// loss must be 1x1. Clears previous adjoints.
  void backward(Var loss);

  const Matrix& value(Var v) const;
  /// Adjoint of a node after backward(); zero matrix if the node was not
  /// reached. Parameter gradients shape-match their values.
  Matrix grad(Var v) const;
  /// Gradients of all registered parameters, keyed by name.
  std::map<std::string, Matrix> param_grads() const;

  std::size_t node_count() const { return nodes_.size(); }
  /// Drops all nodes; previously returned Vars become invalid.
  void reset();

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Matrix value;
    Matrix adjoint;  // sized lazily in backward
    bool needs_grad = false;
    double s0 = 0.0, s1 = 0.0;  // scalar operands / clamp bounds
    int i0 = 0, i1 = 0;         // slice bounds
    std::vector<int> index;     // gather rows
  };

  Var push(Node node);
  const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  static void check_same_shape(const char* op, const Matrix& a, const Matrix& b);

  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
};

// Operator sugar; both operands must live on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);

}  // namespace deconf
