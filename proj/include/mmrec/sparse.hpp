#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mmrec/tensor.hpp"

namespace mmrec {

/// Coordinates of a sparse matrix: unique, in range, sorted by (row, col),
/// with CSR row offsets. Shared between matrices with the same structure.
class SparsityPattern {
 public:
  using Ptr = std::shared_ptr<const SparsityPattern>;

  /// Sorts the coordinates; throws on duplicates or out-of-range entries.
  static Ptr build(std::size_t rows, std::size_t cols,
                   std::vector<std::pair<std::uint32_t, std::uint32_t>> coords);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return row_ids_.size(); }
  std::span<const std::uint32_t> row_ids() const { return row_ids_; }
  std::span<const std::uint32_t> col_ids() const { return col_ids_; }
  std::span<const std::size_t> row_offsets() const { return row_offsets_; }

  /// Entry index of (row, col), or nnz() when absent.
  std::size_t find(std::uint32_t row, std::uint32_t col) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> row_ids_;
  std::vector<std::uint32_t> col_ids_;
  std::vector<std::size_t> row_offsets_;
};

template <typename Real>
struct Triplet {
  std::uint32_t row;
  std::uint32_t col;
  Real value;
};

enum class DuplicatePolicy { kReject, kSum };

/// Coordinate-format sparse matrix over a shared pattern.
template <typename Real>
class SparseMatrix {
 public:
  SparseMatrix() : SparseMatrix(0, 0) {}
  SparseMatrix(std::size_t rows, std::size_t cols);
  SparseMatrix(SparsityPattern::Ptr pattern, std::vector<Real> values);

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet<Real>> triplets,
                                    DuplicatePolicy duplicates = DuplicatePolicy::kReject);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const { return pattern_->rows(); }
  std::size_t cols() const { return pattern_->cols(); }
  std::size_t nnz() const { return pattern_->nnz(); }
  const SparsityPattern& pattern() const { return *pattern_; }
  const SparsityPattern::Ptr& pattern_ptr() const { return pattern_; }
  std::span<const Real> values() const { return values_; }

  /// Value at (row, col); zero when the coordinate is not stored.
  Real at(std::uint32_t row, std::uint32_t col) const;
  std::vector<Triplet<Real>> triplets() const;
  Matrix<Real> to_dense() const;

  /// this * x.
  Matrix<Real> multiply(const Matrix<Real>& x) const;
  /// this^T * x.
  Matrix<Real> multiply_transposed(const Matrix<Real>& x) const;

  template <typename Other>
  SparseMatrix<Other> cast() const {
    return SparseMatrix<Other>(pattern_, std::vector<Other>(values_.begin(), values_.end()));
  }

 private:
  SparsityPattern::Ptr pattern_;
  std::vector<Real> values_;
};

/// Exact sparse-times-dense product. Throws ShapeError when a.cols() != x.rows().
template <typename Real>
Matrix<Real> sparse_dense_matmul(const SparseMatrix<Real>& a, const Matrix<Real>& x) {
  return a.multiply(x);
}

/// D_r^-1/2 A D_c^-1/2 with row and column sums as degrees (one D for a
/// symmetric matrix). Zero-degree rows and
/// columns stay zero. Throws std::invalid_argument on negative entries.
template <typename Real>
SparseMatrix<Real> sym_normalize(const SparseMatrix<Real>& a);

/// Scales each row to sum to one; all-zero rows are kept.
template <typename Real>
SparseMatrix<Real> row_normalize(const SparseMatrix<Real>& a);

/// Elementwise sum of two matrices of equal shape (pattern union).
template <typename Real>
SparseMatrix<Real> sparse_add(const SparseMatrix<Real>& a, const SparseMatrix<Real>& b,
                              Real scale_a = Real{1}, Real scale_b = Real{1});

}  // namespace mmrec
