#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace deconf {

/// Dense row-major matrix of doubles. Plain value type: copyable, movable,
/// immutable-by-convention once handed to another component.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);
  Matrix(int rows, int cols, std::vector<double> data);

  static Matrix identity(int n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_str() const;

  bool all_finite() const;
  double frobenius_norm() const;
  double max_abs() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Shape-checked kernels. All throw DimensionError with both shapes on mismatch.
Matrix multiply(const Matrix& a, const Matrix& b);        // a * b
Matrix multiply_at_b(const Matrix& a, const Matrix& b);   // a^T * b
Matrix multiply_a_bt(const Matrix& a, const Matrix& b);   // a * b^T
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix concat_cols(const Matrix& a, const Matrix& b);
Matrix slice_cols(const Matrix& a, int col_begin, int col_end);
Matrix gather_rows(const Matrix& a, const std::vector<int>& rows);
Matrix relu(const Matrix& a);

double sum_all(const Matrix& a);

/// Throws NumericError when any entry is NaN/Inf. `what` names the tensor.
void require_finite(const Matrix& a, const std::string& what);

}  // namespace deconf
