#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "mmrec/model.hpp"
#include "mmrec/rng.hpp"

namespace mmrec::testing {

/// Random bipartite train set where every user has 2..4 items and no user
/// covers the catalog, with one visual and one textual feature matrix.
inline ModelContext tiny_context(std::size_t n_users = 6, std::size_t n_items = 10,
                                 std::uint64_t seed = 3, std::size_t visual_dim = 4,
                                 std::size_t textual_dim = 3) {
  Rng rng(seed);
  ModelContext c;
  c.n_users = n_users;
  c.n_items = n_items;
  for (std::uint32_t u = 0; u < n_users; ++u) {
    std::set<std::uint32_t> items;
    const auto want = 2 + rng.uniform_index(3);
    while (items.size() < want) items.insert(static_cast<std::uint32_t>(rng.uniform_index(n_items)));
    for (auto i : items) c.train.push_back({u, i});
  }
  auto features = [&](std::size_t dim) {
    Matrix<float> m(n_items, dim);
    for (auto& v : m.values()) v = static_cast<float>(rng.normal());
    return m;
  };
  c.features.emplace_back(Modality::kVisual, features(visual_dim));
  c.features.emplace_back(Modality::kTextual, features(textual_dim));
  return c;
}

/// A fixed batch over the context's train edges with a non-positive negative.
inline std::vector<Triple> tiny_batch(const ModelContext& c, std::size_t size = 6, std::uint64_t seed = 11) {
  Rng rng(seed);
  std::vector<Triple> out;
  for (std::size_t k = 0; k < size; ++k) {
    const auto& e = c.train[rng.uniform_index(c.train.size())];
    std::uint32_t neg;
    do {
      neg = static_cast<std::uint32_t>(rng.uniform_index(c.n_items));
    } while (std::find(c.train.begin(), c.train.end(), UserItem{e.user, neg}) != c.train.end());
    out.push_back({e.user, e.item, neg});
  }
  return out;
}

/// Small-instance defaults so every model builds on tiny_context().
inline ModelConfig tiny_config(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.dim = 3;
  c.knn = 3;
  c.prune_ratio = 0.5;
  c.dropout = 0.3;
  return c;
}

}  // namespace mmrec::testing
