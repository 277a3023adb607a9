#include "deconf/matrix.hpp"

#include <cmath>
#include <cstddef>
#include <utility>

#include "deconf/error.hpp"

namespace deconf {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw DimensionError("negative matrix dimension " + shape_str());
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(rows) * cols)
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int r = static_cast<int>(rows.size());
  int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c)
      throw DimensionError("ragged initializer row " + std::to_string(i));
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                       b.shape_str());
}

// Runtime-dispatched SIMD for the loop nests the training loop lives in.
#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define DECONF_HOT __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define DECONF_HOT
#endif

DECONF_HOT void kernel_matvec(const double* pa, const double* pb, double* po, int n, int k) {
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double s = 0.0;
    for (int kk = 0; kk < k; ++kk) s += arow[kk] * pb[kk];
    po[i] = s;
  }
}

DECONF_HOT void kernel_nn_dense(const double* pa, const double* pb, double* po, int n, int k,
                                int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* orow = po + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = pb + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
}

DECONF_HOT void kernel_nn_sparse(const double* pa, const double* pb, double* po, int n, int k,
                                 int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* orow = po + static_cast<std::size_t>(i) * m;
    for (int kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(kk) * m;
      for (int j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
}

DECONF_HOT void kernel_at_b(const double* pa, const double* pb, double* po, int k, int n, int m,
                            bool sparse) {
  for (int kk = 0; kk < k; ++kk) {
    const double* arow = pa + static_cast<std::size_t>(kk) * n;
    const double* brow = pb + static_cast<std::size_t>(kk) * m;
    for (int i = 0; i < n; ++i) {
      const double aki = arow[i];
      if (sparse && aki == 0.0) continue;
      double* orow = po + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) orow[j] += aki * brow[j];
    }
  }
}

DECONF_HOT void kernel_a_bt(const double* pa, const double* pb, double* po, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* orow = po + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = pb + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      orow[j] = s;
    }
  }
}

}  // namespace

namespace {

// Zero fraction of a sampled stripe; picks the sparse or the vectorizable
// dense kernel. Renormalized adjacencies are mostly zeros, everything else
// is dense.
bool mostly_zero(const double* p, std::size_t size) {
  const std::size_t step = size > 4096 ? size / 2048 : 1;
  std::size_t zeros = 0, seen = 0;
  for (std::size_t i = 0; i < size; i += step, ++seen)
    if (p[i] == 0.0) ++zeros;
  return seen > 0 && zeros * 4 > seen * 3;  // > 75% zeros
}

}  // namespace

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const int n = a.rows(), k = a.cols(), m = b.cols();
  Matrix out(n, m);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  if (m == 1) {
    kernel_matvec(pa, pb, po, n, k);
    return out;
  }
  if (mostly_zero(pa, a.size()))
    kernel_nn_sparse(pa, pb, po, n, k, m);
  else
    kernel_nn_dense(pa, pb, po, n, k, m);
  return out;
}

Matrix multiply_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("matmul_at_b", a, b);
  const int k = a.rows(), n = a.cols(), m = b.cols();
  Matrix out(n, m);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  kernel_at_b(pa, pb, po, k, n, m, mostly_zero(pa, a.size()));
  return out;
}

Matrix multiply_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_a_bt", a, b);
  const int n = a.rows(), k = a.cols(), m = b.rows();
  Matrix out(n, m);
  const double* pa = a.data();
  const double* pb = b.data();
  kernel_a_bt(pa, pb, out.data(), n, k, m);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("add", a, b);
  Matrix out = a;
  double* po = out.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("subtract", a, b);
  Matrix out = a;
  double* po = out.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error("hadamard", a, b);
  Matrix out = a;
  double* po = out.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double* p = out.data(); p != out.data() + out.size(); ++p) *p *= s;
  return out;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  Matrix out(a.rows(), a.cols() + b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
    for (int j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
  }
  return out;
}

Matrix slice_cols(const Matrix& a, int col_begin, int col_end) {
  if (col_begin < 0 || col_end > a.cols() || col_begin > col_end)
    throw DimensionError("slice_cols [" + std::to_string(col_begin) + "," +
                         std::to_string(col_end) + ") out of range for " + a.shape_str());
  Matrix out(a.rows(), col_end - col_begin);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = col_begin; j < col_end; ++j) out(i, j - col_begin) = a(i, j);
  return out;
}

Matrix gather_rows(const Matrix& a, const std::vector<int>& rows) {
  Matrix out(static_cast<int>(rows.size()), a.cols());
  for (int i = 0; i < out.rows(); ++i) {
    int r = rows[i];
    if (r < 0 || r >= a.rows())
      throw DimensionError("gather_rows index " + std::to_string(r) + " out of range for " +
                           a.shape_str());
    for (int j = 0; j < a.cols(); ++j) out(i, j) = a(r, j);
  }
  return out;
}

Matrix relu(const Matrix& a) {
  Matrix out = a;
  for (double* p = out.data(); p != out.data() + out.size(); ++p)
    if (*p < 0.0) *p = 0.0;
  return out;
}

double sum_all(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

void require_finite(const Matrix& a, const std::string& what) {
  if (!a.all_finite()) throw NumericError(what + " contains non-finite entries");
}

}  // namespace deconf
