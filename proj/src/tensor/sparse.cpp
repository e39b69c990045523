#include "mmrec/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mmrec {

SparsityPattern::Ptr SparsityPattern::build(
    std::size_t rows, std::size_t cols,
    std::vector<std::pair<std::uint32_t, std::uint32_t>> coords) {
  std::sort(coords.begin(), coords.end());
  auto p = std::make_shared<SparsityPattern>();
  p->rows_ = rows;
  p->cols_ = cols;
  p->row_ids_.reserve(coords.size());
  p->col_ids_.reserve(coords.size());
  for (std::size_t e = 0; e < coords.size(); ++e) {
    const auto [r, c] = coords[e];
    if (r >= rows || c >= cols) {
      throw ShapeError("sparse: coordinate (" + std::to_string(r) + "," + std::to_string(c) +
                       ") outside " + shape_string(rows, cols));
    }
    if (e > 0 && coords[e - 1] == coords[e]) {
      throw std::invalid_argument("sparse: duplicate coordinate (" + std::to_string(r) + "," +
                                  std::to_string(c) + ")");
    }
    p->row_ids_.push_back(r);
    p->col_ids_.push_back(c);
  }
  p->row_offsets_.assign(rows + 1, 0);
  for (auto r : p->row_ids_) ++p->row_offsets_[r + 1];
  for (std::size_t r = 0; r < rows; ++r) p->row_offsets_[r + 1] += p->row_offsets_[r];
  return p;
}

std::size_t SparsityPattern::find(std::uint32_t row, std::uint32_t col) const {
  if (row >= rows_) return nnz();
  const auto first = col_ids_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[row]);
  const auto last = col_ids_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[row + 1]);
  const auto it = std::lower_bound(first, last, col);
  if (it == last || *it != col) return nnz();
  return static_cast<std::size_t>(it - col_ids_.begin());
}

template <typename Real>
SparseMatrix<Real>::SparseMatrix(std::size_t rows, std::size_t cols)
    : pattern_(SparsityPattern::build(rows, cols, {})) {}

template <typename Real>
SparseMatrix<Real>::SparseMatrix(SparsityPattern::Ptr pattern, std::vector<Real> values)
    : pattern_(std::move(pattern)), values_(std::move(values)) {
  if (!pattern_) throw std::invalid_argument("sparse: null pattern");
  if (values_.size() != pattern_->nnz()) {
    throw ShapeError("sparse: " + std::to_string(values_.size()) + " values for " +
                     std::to_string(pattern_->nnz()) + " coordinates");
  }
}

template <typename Real>
SparseMatrix<Real> SparseMatrix<Real>::from_triplets(std::size_t rows, std::size_t cols,
                                                     std::vector<Triplet<Real>> triplets,
                                                     DuplicatePolicy duplicates) {
  std::stable_sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::pair<std::uint32_t, std::uint32_t>> coords;
  std::vector<Real> values;
  coords.reserve(triplets.size());
  values.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (!coords.empty() && coords.back() == std::pair{t.row, t.col}) {
      if (duplicates == DuplicatePolicy::kReject) {
        throw std::invalid_argument("sparse: duplicate coordinate (" + std::to_string(t.row) +
                                    "," + std::to_string(t.col) + ")");
      }
      values.back() += t.value;
      continue;
    }
    coords.emplace_back(t.row, t.col);
    values.push_back(t.value);
  }
  return SparseMatrix(SparsityPattern::build(rows, cols, std::move(coords)), std::move(values));
}

template <typename Real>
SparseMatrix<Real> SparseMatrix<Real>::identity(std::size_t n) {
  std::vector<Triplet<Real>> t;
  t.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) t.push_back({i, i, Real{1}});
  return from_triplets(n, n, std::move(t));
}

template <typename Real>
Real SparseMatrix<Real>::at(std::uint32_t row, std::uint32_t col) const {
  const auto e = pattern_->find(row, col);
  return e == nnz() ? Real{0} : values_[e];
}

template <typename Real>
std::vector<Triplet<Real>> SparseMatrix<Real>::triplets() const {
  std::vector<Triplet<Real>> out;
  out.reserve(nnz());
  const auto rows = pattern_->row_ids();
  const auto cols = pattern_->col_ids();
  for (std::size_t e = 0; e < nnz(); ++e) out.push_back({rows[e], cols[e], values_[e]});
  return out;
}

template <typename Real>
Matrix<Real> SparseMatrix<Real>::to_dense() const {
  Matrix<Real> out(rows(), cols());
  const auto r = pattern_->row_ids();
  const auto c = pattern_->col_ids();
  for (std::size_t e = 0; e < nnz(); ++e) out(r[e], c[e]) = values_[e];
  return out;
}

template <typename Real>
Matrix<Real> SparseMatrix<Real>::multiply(const Matrix<Real>& x) const {
  if (cols() != x.rows()) {
    throw ShapeError("sparse_dense_matmul: " + shape_string(rows(), cols()) + " * " +
                     shape_string(x.rows(), x.cols()));
  }
  Matrix<Real> out(rows(), x.cols());
  const auto offsets = pattern_->row_offsets();
  const auto c = pattern_->col_ids();
  for (std::size_t r = 0; r < rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
      const Real v = values_[e];
      auto src = x.row(c[e]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

template <typename Real>
Matrix<Real> SparseMatrix<Real>::multiply_transposed(const Matrix<Real>& x) const {
  if (rows() != x.rows()) {
    throw ShapeError("sparse_dense_matmul^T: " + shape_string(cols(), rows()) + " * " +
                     shape_string(x.rows(), x.cols()));
  }
  Matrix<Real> out(cols(), x.cols());
  const auto r = pattern_->row_ids();
  const auto c = pattern_->col_ids();
  for (std::size_t e = 0; e < nnz(); ++e) {
    auto dst = out.row(c[e]);
    auto src = x.row(r[e]);
    const Real v = values_[e];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
  }
  return out;
}

template <typename Real>
SparseMatrix<Real> sym_normalize(const SparseMatrix<Real>& a) {
  const auto rows = a.pattern().row_ids();
  const auto cols = a.pattern().col_ids();
  const auto values = a.values();
  std::vector<Real> row_degree(a.rows(), Real{0});
  std::vector<Real> col_degree(a.cols(), Real{0});
  for (std::size_t e = 0; e < a.nnz(); ++e) {
    if (values[e] < Real{0}) {
      throw std::invalid_argument("sym_normalize: negative entry at (" +
                                  std::to_string(rows[e]) + "," + std::to_string(cols[e]) + ")");
    }
    row_degree[rows[e]] += values[e];
    col_degree[cols[e]] += values[e];
  }
  std::vector<Real> out(a.nnz());
  for (std::size_t e = 0; e < a.nnz(); ++e) {
    const Real d = row_degree[rows[e]] * col_degree[cols[e]];
    out[e] = d > Real{0} ? values[e] / std::sqrt(d) : Real{0};
  }
  return SparseMatrix<Real>(a.pattern_ptr(), std::move(out));
}

template <typename Real>
SparseMatrix<Real> row_normalize(const SparseMatrix<Real>& a) {
  const auto offsets = a.pattern().row_offsets();
  const auto values = a.values();
  std::vector<Real> out(values.begin(), values.end());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Real sum{0};
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) sum += values[e];
    if (sum == Real{0}) continue;
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) out[e] = values[e] / sum;
  }
  return SparseMatrix<Real>(a.pattern_ptr(), std::move(out));
}

template <typename Real>
SparseMatrix<Real> sparse_add(const SparseMatrix<Real>& a, const SparseMatrix<Real>& b,
                              Real scale_a, Real scale_b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("sparse_add: " + shape_string(a.rows(), a.cols()) + " + " +
                     shape_string(b.rows(), b.cols()));
  }
  std::vector<Triplet<Real>> t;
  t.reserve(a.nnz() + b.nnz());
  for (auto x : a.triplets()) t.push_back({x.row, x.col, scale_a * x.value});
  for (auto x : b.triplets()) t.push_back({x.row, x.col, scale_b * x.value});
  return SparseMatrix<Real>::from_triplets(a.rows(), a.cols(), std::move(t),
                                           DuplicatePolicy::kSum);
}

template class SparseMatrix<float>;
template class SparseMatrix<double>;
template SparseMatrix<float> sym_normalize(const SparseMatrix<float>&);
template SparseMatrix<double> sym_normalize(const SparseMatrix<double>&);
template SparseMatrix<float> row_normalize(const SparseMatrix<float>&);
template SparseMatrix<double> row_normalize(const SparseMatrix<double>&);
template SparseMatrix<float> sparse_add(const SparseMatrix<float>&, const SparseMatrix<float>&,
                                        float, float);
template SparseMatrix<double> sparse_add(const SparseMatrix<double>&,
                                         const SparseMatrix<double>&, double, double);

}  // namespace mmrec
