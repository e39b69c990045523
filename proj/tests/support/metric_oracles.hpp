#pragma once

// Direct-formula reference metrics over explicit sets. Slow on purpose.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "mmrec/evaluation.hpp"
#include "mmrec/rng.hpp"

namespace mmrec::oracle {

struct Instance {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<UserItem> train;
  ItemSets relevant;
  std::vector<RecommendationList> lists;
};

inline std::vector<std::uint32_t> head(const RecommendationList& l, std::size_t k) {
  return {l.items.begin(), l.items.begin() + static_cast<std::ptrdiff_t>(std::min(k, l.items.size()))};
}

inline std::vector<const RecommendationList*> with_relevance(const Instance& in) {
  std::vector<const RecommendationList*> out;
  for (const auto& l : in.lists) {
    if (!in.relevant[l.user].empty()) out.push_back(&l);
  }
  return out;
}

inline double recall(const Instance& in, std::size_t k) {
  const auto users = with_relevance(in);
  if (users.empty()) return 0;
  double sum = 0;
  for (const auto* l : users) {
    const std::set<std::uint32_t> rel(in.relevant[l->user].begin(), in.relevant[l->user].end());
    const auto top = head(*l, k);
    const std::set<std::uint32_t> listed(top.begin(), top.end());
    std::vector<std::uint32_t> both;
    std::set_intersection(rel.begin(), rel.end(), listed.begin(), listed.end(), std::back_inserter(both));
    sum += static_cast<double>(both.size()) / static_cast<double>(rel.size());
  }
  return sum / static_cast<double>(users.size());
}

inline double ndcg(const Instance& in, std::size_t k) {
  const auto users = with_relevance(in);
  if (users.empty()) return 0;
  double sum = 0;
  for (const auto* l : users) {
    const std::set<std::uint32_t> rel(in.relevant[l->user].begin(), in.relevant[l->user].end());
    const auto top = head(*l, k);
    double dcg = 0;
    for (std::size_t r = 1; r <= top.size(); ++r) {
      const double gain = std::pow(2.0, rel.count(top[r - 1]) ? 1.0 : 0.0) - 1.0;
      dcg += gain / std::log2(r + 1.0);
    }
    double idcg = 0;
    for (std::size_t r = 1; r <= std::min(k, rel.size()); ++r) idcg += 1.0 / std::log2(r + 1.0);
    sum += dcg / idcg;
  }
  return sum / static_cast<double>(users.size());
}

inline double efd(const Instance& in, std::size_t k) {
  std::map<std::uint32_t, double> count;
  for (const auto& e : in.train) count[e.item] += 1;
  const double total = static_cast<double>(in.train.size());
  const auto users = with_relevance(in);
  if (users.empty()) return 0;
  double c = 0;
  for (std::size_t r = 1; r <= k; ++r) c += 1.0 / std::log2(r + 1.0);
  double sum = 0;
  for (const auto* l : users) {
    const std::set<std::uint32_t> rel(in.relevant[l->user].begin(), in.relevant[l->user].end());
    const auto top = head(*l, k);
    double s = 0;
    for (std::size_t r = 1; r <= top.size(); ++r) {
      if (!rel.count(top[r - 1])) continue;
      const double p = (count.count(top[r - 1]) ? count[top[r - 1]] : 0.5) / total;
      s += (1.0 / std::log2(r + 1.0)) * -std::log2(p);
    }
    sum += s / c;
  }
  return sum / static_cast<double>(users.size());
}

inline std::set<std::uint32_t> catalog(const Instance& in) {
  std::set<std::uint32_t> out;
  for (const auto& e : in.train) out.insert(e.item);
  return out;
}

/// Whether any top-k slot holds a catalog item (Gini is undefined otherwise).
inline bool exposed(const Instance& in, std::size_t k) {
  const auto items = catalog(in);
  for (const auto& l : in.lists) {
    for (auto i : head(l, k)) {
      if (items.count(i)) return true;
    }
  }
  return false;
}

/// 1 - Gini via the mean absolute difference form sum|x_i - x_j| / (2 n^2 mean).
inline double gini(const Instance& in, std::size_t k) {
  const auto items = catalog(in);
  std::map<std::uint32_t, double> exposure;
  for (auto i : items) exposure[i] = 0;
  for (const auto& l : in.lists) {
    for (auto i : head(l, k)) {
      if (items.count(i)) exposure[i] += 1;
    }
  }
  const double n = static_cast<double>(items.size());
  double total = 0, diff = 0;
  for (const auto& [a, x] : exposure) {
    total += x;
    for (const auto& [b, y] : exposure) diff += std::abs(x - y);
  }
  const double mean = total / n;
  return 1.0 - diff / (2.0 * n * n * mean);
}

inline std::set<std::uint32_t> short_head(const Instance& in) {
  std::map<std::uint32_t, std::size_t> count;
  for (const auto& e : in.train) ++count[e.item];
  std::vector<std::pair<std::size_t, std::uint32_t>> order;
  for (const auto& [i, c] : count) order.push_back({c, i});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  const auto size = static_cast<std::size_t>(std::ceil(order.size() * 2 / 10.0 - 1e-12));
  std::set<std::uint32_t> out;
  for (std::size_t r = 0; r < size; ++r) out.insert(order[r].second);
  return out;
}

inline double aplt(const Instance& in, std::size_t k) {
  if (in.lists.empty()) return 0;
  const auto phi = short_head(in);
  double sum = 0;
  for (const auto& l : in.lists) {
    double tail = 0;
    for (auto i : head(l, k)) tail += phi.count(i) ? 0 : 1;
    sum += tail / static_cast<double>(k);
  }
  return sum / static_cast<double>(in.lists.size());
}

inline double icov(const Instance& in, std::size_t k) {
  const auto items = catalog(in);
  std::set<std::uint32_t> seen;
  for (const auto& l : in.lists) {
    for (auto i : head(l, k)) {
      if (items.count(i)) seen.insert(i);
    }
  }
  return 100.0 * static_cast<double>(seen.size()) / static_cast<double>(items.size());
}

/// A random evaluation instance: train edges, disjoint relevance sets and
/// top lists drawn from each user's non-train items (some users get no
/// relevant items).
inline Instance random_instance(Rng& rng, std::size_t max_users = 50, std::size_t max_items = 100,
                                std::size_t k = 20) {
  Instance in;
  in.n_users = 1 + rng.uniform_index(max_users);
  in.n_items = 5 + rng.uniform_index(max_items - 4);
  in.relevant.assign(in.n_users, {});
  for (std::uint32_t u = 0; u < in.n_users; ++u) {
    std::vector<std::uint32_t> perm(in.n_items);
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(std::span(perm));
    const auto n_train = 1 + rng.uniform_index(std::min<std::size_t>(in.n_items / 2, 10));
    for (std::size_t j = 0; j < n_train; ++j) in.train.push_back({u, perm[j]});
    const auto rest = in.n_items - n_train;
    const auto n_rel = rng.uniform_index(std::min<std::size_t>(rest, 8) + 1);
    in.relevant[u].assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                          perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_rel));
    std::sort(in.relevant[u].begin(), in.relevant[u].end());
    std::vector<std::uint32_t> candidates(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    rng.shuffle(std::span(candidates));
    RecommendationList l;
    l.user = u;
    for (std::size_t r = 0; r < std::min(k, candidates.size()); ++r) {
      l.items.push_back(candidates[r]);
      l.scores.push_back(static_cast<double>(k - r));
    }
    in.lists.push_back(std::move(l));
  }
  std::sort(in.train.begin(), in.train.end());
  return in;
}

}  // namespace mmrec::oracle
