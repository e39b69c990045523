#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmrec/autograd.hpp"
#include "mmrec/dataset.hpp"
#include "mmrec/rng.hpp"
#include "mmrec/sparse.hpp"

namespace mmrec {

/// (U + I) x (U + I) symmetric user-item adjacency with unit weights; item
/// i is node U + i.
template <typename Real>
SparseMatrix<Real> bipartite_adjacency(std::size_t n_users, std::size_t n_items,
                                       std::span<const UserItem> edges);

/// For each row of the bipartite pattern, the index of the edge it came from.
/// Lets per-edge tape values be laid out in pattern order with row_gather.
std::vector<std::uint32_t> bipartite_entry_edges(const SparsityPattern& pattern,
                                                 std::size_t n_users,
                                                 std::span<const UserItem> edges);

/// Top-k cosine neighbours of every row of `features` (self excluded; ties
/// to the lower id), as a sparse pattern plus the similarity per entry.
/// Throws std::invalid_argument when k >= rows.
template <typename Real>
SparseMatrix<Real> knn_graph(const Matrix<Real>& features, std::size_t k);

/// knn_graph with negative similarities clamped to 0, then row-normalized.
template <typename Real>
SparseMatrix<Real> knn_affinity(const Matrix<Real>& features, std::size_t k);

/// Pattern union of several matrices of equal shape, plus for each input
/// the position of each of its entries in the union.
struct PatternUnion {
  SparsityPattern::Ptr pattern;
  std::vector<std::vector<std::uint32_t>> positions;
};
PatternUnion pattern_union(std::span<const SparsityPattern::Ptr> patterns);

/// Degree-sensitive edge sampling: keeps round((1 - drop_ratio) * |E|)
/// edges, drawn without replacement with probability proportional to
/// (deg_u * deg_i)^-1/2. Returned in input order.
std::vector<UserItem> degree_sensitive_prune(std::span<const UserItem> edges, std::size_t n_users,
                                             std::size_t n_items, double drop_ratio, Rng& rng);

/// The (unnormalized) keep weights used by degree_sensitive_prune.
std::vector<double> degree_keep_weights(std::span<const UserItem> edges, std::size_t n_users,
                                        std::size_t n_items);

/// Mean of the layer outputs x, A x, ..., A^L x (the LightGCN readout).
template <typename Real>
Var<Real> light_propagate(Tape<Real>& tape, const SparseMatrix<Real>& adjacency, Var<Real> x,
                          int layers);

template <typename Real>
Matrix<Real> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace mmrec
