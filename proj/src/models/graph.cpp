#include "mmrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mmrec {

template <typename Real>
SparseMatrix<Real> bipartite_adjacency(std::size_t n_users, std::size_t n_items,
                                       std::span<const UserItem> edges) {
  std::vector<Triplet<Real>> t;
  t.reserve(2 * edges.size());
  for (const auto& e : edges) {
    if (e.user >= n_users || e.item >= n_items) throw std::out_of_range("bipartite_adjacency: id out of range");
    const auto item_node = static_cast<std::uint32_t>(n_users + e.item);
    t.push_back({e.user, item_node, Real{1}});
    t.push_back({item_node, e.user, Real{1}});
  }
  return SparseMatrix<Real>::from_triplets(n_users + n_items, n_users + n_items, std::move(t));
}

std::vector<std::uint32_t> bipartite_entry_edges(const SparsityPattern& pattern,
                                                 std::size_t n_users,
                                                 std::span<const UserItem> edges) {
  std::vector<std::uint32_t> out(pattern.nnz());
  for (std::uint32_t e = 0; e < edges.size(); ++e) {
    const auto item_node = static_cast<std::uint32_t>(n_users + edges[e].item);
    const auto a = pattern.find(edges[e].user, item_node);
    const auto b = pattern.find(item_node, edges[e].user);
    if (a == pattern.nnz() || b == pattern.nnz()) {
      throw std::invalid_argument("bipartite_entry_edges: edge missing from pattern");
    }
    out[a] = e;
    out[b] = e;
  }
  return out;
}

template <typename Real>
SparseMatrix<Real> knn_graph(const Matrix<Real>& features, std::size_t k) {
  const auto n = features.rows();
  if (k < 1 || k >= n) {
    throw std::invalid_argument("knn_graph: k = " + std::to_string(k) + " must lie in [1, " +
                                std::to_string(n) + ")");
  }
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto v : features.row(i)) s += static_cast<double>(v) * v;
    norms[i] = std::sqrt(s);
  }
  std::vector<Triplet<Real>> t;
  t.reserve(n * k);
  std::vector<double> sim(n);
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      const auto a = features.row(i);
      const auto b = features.row(j);
      for (std::size_t c = 0; c < a.size(); ++c) d += static_cast<double>(a[c]) * b[c];
      const double denom = norms[i] * norms[j];
      sim[j] = denom > 0.0 ? d / denom : 0.0;
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), 0u);
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                        return sim[a] != sim[b] ? sim[a] > sim[b] : a < b;
                      });
    for (std::size_t r = 0; r < k; ++r) {
      t.push_back({static_cast<std::uint32_t>(i), order[r], static_cast<Real>(sim[order[r]])});
    }
  }
  return SparseMatrix<Real>::from_triplets(n, n, std::move(t));
}

template <typename Real>
SparseMatrix<Real> knn_affinity(const Matrix<Real>& features, std::size_t k) {
  const auto g = knn_graph(features, k);
  std::vector<Real> v(g.values().begin(), g.values().end());
  for (auto& x : v) x = std::max(x, Real{0});
  return row_normalize(SparseMatrix<Real>(g.pattern_ptr(), std::move(v)));
}

PatternUnion pattern_union(std::span<const SparsityPattern::Ptr> patterns) {
  if (patterns.empty()) throw std::invalid_argument("pattern_union: no patterns");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> coords;
  for (const auto& p : patterns) {
    if (p->rows() != patterns[0]->rows() || p->cols() != patterns[0]->cols()) {
      throw ShapeError("pattern_union: shapes differ");
    }
    for (std::size_t e = 0; e < p->nnz(); ++e) coords.emplace_back(p->row_ids()[e], p->col_ids()[e]);
  }
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  PatternUnion u;
  u.pattern = SparsityPattern::build(patterns[0]->rows(), patterns[0]->cols(), std::move(coords));
  for (const auto& p : patterns) {
    std::vector<std::uint32_t> pos(p->nnz());
    for (std::size_t e = 0; e < p->nnz(); ++e) {
      pos[e] = static_cast<std::uint32_t>(u.pattern->find(p->row_ids()[e], p->col_ids()[e]));
    }
    u.positions.push_back(std::move(pos));
  }
  return u;
}

std::vector<double> degree_keep_weights(std::span<const UserItem> edges, std::size_t n_users,
                                        std::size_t n_items) {
  std::vector<double> du(n_users, 0.0), di(n_items, 0.0);
  for (const auto& e : edges) {
    du.at(e.user) += 1.0;
    di.at(e.item) += 1.0;
  }
  std::vector<double> w(edges.size());
  for (std::size_t k = 0; k < edges.size(); ++k) {
    w[k] = 1.0 / std::sqrt(du[edges[k].user] * di[edges[k].item]);
  }
  return w;
}

std::vector<UserItem> degree_sensitive_prune(std::span<const UserItem> edges, std::size_t n_users,
                                             std::size_t n_items, double drop_ratio, Rng& rng) {
  if (!(drop_ratio >= 0.0 && drop_ratio < 1.0)) {
    throw std::invalid_argument("degree_sensitive_prune: drop ratio must lie in [0, 1)");
  }
  const auto keep = static_cast<std::size_t>(
      std::llround((1.0 - drop_ratio) * static_cast<double>(edges.size())));
  if (keep >= edges.size()) return {edges.begin(), edges.end()};
  const auto w = degree_keep_weights(edges, n_users, n_items);
  // Efraimidis-Spirakis: the top-`keep` keys u^(1/w) form a weighted sample
  // without replacement. Compare log(u) / w to stay in range.
  std::vector<std::pair<double, std::uint32_t>> keys(edges.size());
  for (std::uint32_t k = 0; k < edges.size(); ++k) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    keys[k] = {std::log(u) / w[k], k};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(keep), keys.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<std::uint32_t> chosen;
  chosen.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) chosen.push_back(keys[r].second);
  std::sort(chosen.begin(), chosen.end());
  std::vector<UserItem> out;
  out.reserve(keep);
  for (auto k : chosen) out.push_back(edges[k]);
  return out;
}

template <typename Real>
Var<Real> light_propagate(Tape<Real>& tape, const SparseMatrix<Real>& adjacency, Var<Real> x,
                          int layers) {
  if (layers < 0) throw std::invalid_argument("light_propagate: negative layer count");
  Var<Real> acc = x;
  Var<Real> h = x;
  for (int l = 0; l < layers; ++l) {
    h = tape.spmm(adjacency, h);
    acc = tape.add(acc, h);
  }
  return layers == 0 ? acc : tape.scale(acc, Real{1} / static_cast<Real>(layers + 1));
}

template <typename Real>
Matrix<Real> xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<Real> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return m;
}

#define MMREC_INSTANTIATE(Real)                                                              \
  template SparseMatrix<Real> bipartite_adjacency(std::size_t, std::size_t,                  \
                                                  std::span<const UserItem>);                \
  template SparseMatrix<Real> knn_graph(const Matrix<Real>&, std::size_t);                   \
  template SparseMatrix<Real> knn_affinity(const Matrix<Real>&, std::size_t);                \
  template Var<Real> light_propagate(Tape<Real>&, const SparseMatrix<Real>&, Var<Real>, int); \
  template Matrix<Real> xavier_uniform(std::size_t, std::size_t, Rng&);

MMREC_INSTANTIATE(float)
MMREC_INSTANTIATE(double)

}  // namespace mmrec
