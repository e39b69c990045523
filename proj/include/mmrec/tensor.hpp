#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmrec {

/// Raised when a non-finite value appears anywhere in a computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major 2-D matrix.
template <typename Real>
class Matrix {
 public:
  using value_type = Real;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real{0})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw ShapeError("matrix: value count " + std::to_string(values_.size()) +
                       " does not match shape " + std::to_string(rows_) + "x" +
                       std::to_string(cols_));
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<Real> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("matrix: ragged initializer");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(values));
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Real{1};
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<Real> values() { return values_; }
  std::span<const Real> values() const { return values_; }
  std::span<Real> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  void fill(Real v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](Real v) { return std::isfinite(v); });
  }

  template <typename Other>
  Matrix<Other> cast() const {
    std::vector<Other> out(values_.begin(), values_.end());
    return Matrix<Other>(rows_, cols_, std::move(out));
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> values_;
};

/// The trainable storage type.
using Tensor = Matrix<float>;

inline std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " * " +
                     shape_string(b.rows(), b.cols()));
  }
  Matrix<Real> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real s = a(i, k);
      if (s == Real{0}) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * src[j];
    }
  }
  return out;
}

/// a * b^T without materialising the transpose.
template <typename Real>
Matrix<Real> matmul_transposed(const Matrix<Real>& a, const Matrix<Real>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: " + shape_string(a.rows(), a.cols()) + " * (" +
                     shape_string(b.rows(), b.cols()) + ")^T");
  }
  Matrix<Real> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      Real acc{0};
      for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename Real>
Matrix<Real> transpose(const Matrix<Real>& a) {
  Matrix<Real> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  Real acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// Copies the listed rows of `m` into a new matrix.
template <typename Real>
Matrix<Real> gather_rows(const Matrix<Real>& m, std::span<const std::uint32_t> rows) {
  Matrix<Real> out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(m.row(rows[r]).begin(), m.cols(), out.row(r).begin());
  }
  return out;
}

}  // namespace mmrec
