#include "mmrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "mmrec/log.hpp"

namespace mmrec {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::size_t cut(const RecommendationList& l, std::size_t k) { return std::min(k, l.items.size()); }

bool contains(const std::vector<std::uint32_t>& sorted, std::uint32_t item) {
  return std::binary_search(sorted.begin(), sorted.end(), item);
}

/// Lists whose user has relevant items; warns once about the rest.
std::vector<const RecommendationList*> evaluable(std::span<const RecommendationList> lists,
                                                 const ItemSets& relevant) {
  std::vector<const RecommendationList*> out;
  std::size_t skipped = 0;
  for (const auto& l : lists) {
    if (l.user < relevant.size() && !relevant[l.user].empty()) {
      out.push_back(&l);
    } else {
      ++skipped;
    }
  }
  if (skipped > 0) log::warn(std::to_string(skipped) + " user(s) without relevant items skipped");
  return out;
}

double discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

}  // namespace

template <typename Real>
RecommendationList select_topk(std::uint32_t user, std::span<const Real> scores,
                               std::span<const std::uint32_t> exclude,
                               const std::vector<bool>& candidate, std::size_t k) {
  if (k == 0) throw std::invalid_argument("rank_topk: k must be at least 1");
  std::vector<std::uint32_t> pool;
  pool.reserve(scores.size());
  auto ex = exclude.begin();
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    while (ex != exclude.end() && *ex < i) ++ex;
    if (ex != exclude.end() && *ex == i) continue;
    if (!candidate.empty() && !candidate[i]) continue;
    pool.push_back(i);
  }
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  const auto n = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(), better);
  RecommendationList out;
  out.user = user;
  for (std::size_t r = 0; r < n; ++r) {
    out.items.push_back(pool[r]);
    out.scores.push_back(static_cast<double>(scores[pool[r]]));
  }
  return out;
}

template <typename Real>
std::vector<RecommendationList> rank_topk(Model<Real>& model, std::span<const std::uint32_t> users,
                                          const ItemSets& train, const std::vector<bool>& candidate,
                                          const RankOptions& options) {
  if (options.k == 0) throw std::invalid_argument("rank_topk: k must be at least 1");
  for (auto u : users) {
    if (u >= model.n_users()) throw std::out_of_range("rank_topk: unknown user " + std::to_string(u));
  }
  if (!candidate.empty() && candidate.size() != model.n_items()) {
    throw std::invalid_argument("rank_topk: candidate mask does not match the catalog");
  }
  static const std::vector<std::uint32_t> kNone;
  std::vector<RecommendationList> out(users.size());
  const auto batch = std::max<std::size_t>(1, options.batch_users);
  const auto threads = std::max(1u, options.threads);
  for (std::size_t start = 0; start < users.size(); start += batch) {
    const auto count = std::min(batch, users.size() - start);
    const auto chunk = users.subspan(start, count);
    const auto scores = model.score(chunk);
    auto work = [&](std::size_t worker) {
      for (std::size_t r = worker; r < count; r += threads) {
        const auto u = chunk[r];
        const auto& ex = u < train.size() ? train[u] : kNone;
        out[start + r] = select_topk<Real>(u, scores.row(r), ex, candidate, options.k);
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
      for (auto& t : pool) t.join();
    }
  }
  return out;
}

std::string_view to_string(ShortHeadRule rule) {
  switch (rule) {
    case ShortHeadRule::kTopFraction: return "top_fraction";
    case ShortHeadRule::kInteractionShare: return "interaction_share";
  }
  return "unknown";
}

ShortHeadRule parse_short_head_rule(std::string_view name) {
  if (name == "top_fraction") return ShortHeadRule::kTopFraction;
  if (name == "interaction_share") return ShortHeadRule::kInteractionShare;
  throw std::invalid_argument("unknown short-head rule '" + std::string(name) +
                              "' (expected top_fraction or interaction_share)");
}

PopularityProfile PopularityProfile::from(std::span<const UserItem> train, std::size_t n_items,
                                          ShortHeadRule rule) {
  PopularityProfile p;
  p.counts.assign(n_items, 0);
  for (const auto& e : train) {
    if (e.item >= n_items) throw std::out_of_range("popularity: item id out of range");
    ++p.counts[e.item];
  }
  p.total = train.size();
  p.catalog.assign(n_items, false);
  std::vector<std::uint32_t> order;
  for (std::uint32_t i = 0; i < n_items; ++i) {
    if (p.counts[i] > 0) {
      p.catalog[i] = true;
      order.push_back(i);
    }
  }
  p.catalog_size = order.size();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return p.counts[a] > p.counts[b]; });
  p.short_head.assign(n_items, false);
  if (rule == ShortHeadRule::kTopFraction) {
    const auto head = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(order.size()) - 1e-9));
    for (std::size_t r = 0; r < head; ++r) p.short_head[order[r]] = true;
  } else {
    std::size_t covered = 0;
    for (auto i : order) {
      if (static_cast<double>(covered) >= 0.8 * static_cast<double>(p.total)) break;
      p.short_head[i] = true;
      covered += p.counts[i];
    }
  }
  return p;
}

double PopularityProfile::probability(std::uint32_t item) const {
  if (total == 0) throw std::invalid_argument("popularity: empty train split");
  const double c = counts.at(item) > 0 ? static_cast<double>(counts[item]) : 0.5;
  return c / static_cast<double>(total);
}

double recall_at_k(std::span<const RecommendationList> lists, const ItemSets& relevant, std::size_t k) {
  const auto users = evaluable(lists, relevant);
  if (users.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* l : users) {
    const auto& rel = relevant[l->user];
    std::size_t hits = 0;
    for (std::size_t r = 0; r < cut(*l, k); ++r) hits += contains(rel, l->items[r]);
    sum += static_cast<double>(hits) / static_cast<double>(rel.size());
  }
  return sum / static_cast<double>(users.size());
}

double ndcg_at_k(std::span<const RecommendationList> lists, const ItemSets& relevant, std::size_t k) {
  const auto users = evaluable(lists, relevant);
  if (users.empty()) return 0.0;
  double sum = 0.0;
  for (const auto* l : users) {
    const auto& rel = relevant[l->user];
    double dcg = 0.0;
    for (std::size_t r = 0; r < cut(*l, k); ++r) {
      if (contains(rel, l->items[r])) dcg += discount(r + 1);
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, rel.size()); ++r) idcg += discount(r + 1);
    sum += dcg / idcg;
  }
  return sum / static_cast<double>(users.size());
}

double efd_at_k(std::span<const RecommendationList> lists, const ItemSets& relevant,
                const PopularityProfile& popularity, std::size_t k) {
  if (popularity.total == 0) throw std::invalid_argument("efd: empty train split");
  const auto users = evaluable(lists, relevant);
  if (users.empty()) return 0.0;
  double norm = 0.0;
  for (std::size_t r = 0; r < k; ++r) norm += discount(r + 1);
  double sum = 0.0;
  for (const auto* l : users) {
    const auto& rel = relevant[l->user];
    double s = 0.0;
    for (std::size_t r = 0; r < cut(*l, k); ++r) {
      if (contains(rel, l->items[r])) s += discount(r + 1) * -std::log2(popularity.probability(l->items[r]));
    }
    sum += s / norm;
  }
  return sum / static_cast<double>(users.size());
}

double gini_at_k(std::span<const RecommendationList> lists, const PopularityProfile& popularity,
                 std::size_t k) {
  const auto n = popularity.catalog_size;
  if (n == 0) throw std::invalid_argument("gini: empty train catalog");
  std::vector<double> counts(popularity.counts.size(), 0.0);
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < cut(l, k); ++r) counts.at(l.items[r]) += 1.0;
  }
  std::vector<double> p;
  p.reserve(n);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (popularity.catalog[i]) p.push_back(counts[i]);
  }
  std::sort(p.begin(), p.end());
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (total == 0.0) throw std::invalid_argument("gini: no recommendations in the train catalog");
  double num = 0.0;
  const auto nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) num += (2.0 * static_cast<double>(i + 1) - nd - 1.0) * p[i];
  return 1.0 - num / (nd * total);
}

double aplt_at_k(std::span<const RecommendationList> lists, const PopularityProfile& popularity,
                 std::size_t k) {
  if (lists.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& l : lists) {
    std::size_t tail = 0;
    for (std::size_t r = 0; r < cut(l, k); ++r) tail += !popularity.short_head.at(l.items[r]);
    sum += static_cast<double>(tail) / static_cast<double>(k);
  }
  return sum / static_cast<double>(lists.size());
}

double icov_at_k(std::span<const RecommendationList> lists, const PopularityProfile& popularity,
                 std::size_t k) {
  if (popularity.catalog_size == 0) throw std::invalid_argument("icov: empty train catalog");
  std::vector<bool> seen(popularity.catalog.size(), false);
  std::size_t covered = 0;
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < cut(l, k); ++r) {
      const auto i = l.items[r];
      if (popularity.catalog.at(i) && !seen[i]) {
        seen[i] = true;
        ++covered;
      }
    }
  }
  return 100.0 * static_cast<double>(covered) / static_cast<double>(popularity.catalog_size);
}

std::vector<MetricRow> evaluate_lists(std::span<const RecommendationList> lists, const ItemSets& relevant,
                                      const PopularityProfile& popularity,
                                      std::span<const std::size_t> cutoffs, const std::string& dataset,
                                      const std::string& model) {
  std::vector<MetricRow> rows;
  for (auto k : cutoffs) {
    MetricRow row;
    row.dataset = dataset;
    row.model = model;
    row.k = k;
    row.recall = recall_at_k(lists, relevant, k);
    row.ndcg = ndcg_at_k(lists, relevant, k);
    row.efd = efd_at_k(lists, relevant, popularity, k);
    row.gini = gini_at_k(lists, popularity, k);
    row.aplt = aplt_at_k(lists, popularity, k);
    row.icov = icov_at_k(lists, popularity, k);
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::uint32_t> users_with_items(const ItemSets& relevant) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t u = 0; u < relevant.size(); ++u) {
    if (!relevant[u].empty()) out.push_back(u);
  }
  return out;
}

void write_metrics_tsv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "dataset\tmodel\tk\trecall\tndcg\tefd\tgini\taplt\ticov\n";
  for (const auto& r : rows) {
    out << r.dataset << '\t' << r.model << '\t' << r.k << '\t' << fixed(r.recall, 6) << '\t'
        << fixed(r.ndcg, 6) << '\t' << fixed(r.efd, 6) << '\t' << fixed(r.gini, 6) << '\t'
        << fixed(r.aplt, 6) << '\t' << fixed(r.icov, 6) << '\n';
  }
}

std::vector<MetricRow> read_metrics_tsv(std::istream& in, const std::string& source) {
  std::vector<MetricRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    std::istringstream fields(line);
    MetricRow r;
    std::string k;
    if (!(std::getline(fields, r.dataset, '\t') && std::getline(fields, r.model, '\t') &&
          std::getline(fields, k, '\t') && fields >> r.recall >> r.ndcg >> r.efd >> r.gini >> r.aplt >> r.icov)) {
      throw ParseError(source, n, "expected 9 tab-separated fields");
    }
    try {
      r.k = std::stoul(k);
    } catch (const std::exception&) {
      throw ParseError(source, n, "bad cutoff '" + k + "'");
    }
    rows.push_back(std::move(r));
  }
  if (n == 0) throw ParseError(source, "empty metrics file");
  return rows;
}

std::string metrics_markdown(std::span<const MetricRow> rows) {
  std::vector<std::string> datasets;
  std::vector<std::size_t> cutoffs;
  for (const auto& r : rows) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    if (std::find(cutoffs.begin(), cutoffs.end(), r.k) == cutoffs.end()) cutoffs.push_back(r.k);
  }
  std::sort(cutoffs.begin(), cutoffs.end());
  static constexpr const char* kNames[] = {"Recall", "nDCG", "EFD", "Gini", "APLT", "iCov"};
  auto metric = [](const MetricRow& r, int m) {
    const double v[] = {r.recall, r.ndcg, r.efd, r.gini, r.aplt, r.icov};
    return v[m];
  };
  std::ostringstream out;
  for (const auto& dataset : datasets) {
    std::vector<std::string> models;
    std::map<std::pair<std::string, std::size_t>, const MetricRow*> cell;
    for (const auto& r : rows) {
      if (r.dataset != dataset) continue;
      if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
      cell[{r.model, r.k}] = &r;
    }
    out << "### " << dataset << "\n\n| Model |";
    for (auto k : cutoffs)
      for (const auto* name : kNames) out << ' ' << name << '@' << k << " |";
    out << "\n|---|";
    for (std::size_t c = 0; c < cutoffs.size() * 6; ++c) out << "---:|";
    out << '\n';
    // Per column: the distinct values, descending, to find best and second best.
    std::map<std::pair<std::size_t, int>, std::vector<std::string>> ranked;
    for (auto k : cutoffs) {
      for (int m = 0; m < 6; ++m) {
        std::vector<double> values;
        for (const auto& model : models) {
          if (auto it = cell.find({model, k}); it != cell.end()) values.push_back(metric(*it->second, m));
        }
        std::vector<std::string> shown;
        std::sort(values.rbegin(), values.rend());
        for (auto v : values) {
          const auto s = fixed(v, m == 5 ? 2 : 4);
          if (std::find(shown.begin(), shown.end(), s) == shown.end()) shown.push_back(s);
        }
        ranked[{k, m}] = shown;
      }
    }
    for (const auto& model : models) {
      out << "| " << model << " |";
      for (auto k : cutoffs) {
        const auto it = cell.find({model, k});
        for (int m = 0; m < 6; ++m) {
          if (it == cell.end()) {
            out << " - |";
            continue;
          }
          const auto s = fixed(metric(*it->second, m), m == 5 ? 2 : 4);
          const auto& order = ranked[{k, m}];
          const bool several = models.size() > 1;
          if (several && !order.empty() && s == order[0]) {
            out << " **" << s << "** |";
          } else if (several && order.size() > 1 && s == order[1]) {
            out << " <u>" << s << "</u> |";
          } else {
            out << ' ' << s << " |";
          }
        }
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

void write_recommendations(std::ostream& out, std::span<const RecommendationList> lists,
                           const IdMap& users, const IdMap& items) {
  out << "user\titem\trank\tscore\n";
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < l.items.size(); ++r) {
      char score[64];
      std::snprintf(score, sizeof score, "%.6g", l.scores[r]);
      out << users.id(l.user) << '\t' << items.id(l.items[r]) << '\t' << r + 1 << '\t' << score << '\n';
    }
  }
}

template RecommendationList select_topk(std::uint32_t, std::span<const float>, std::span<const std::uint32_t>,
                                        const std::vector<bool>&, std::size_t);
template RecommendationList select_topk(std::uint32_t, std::span<const double>, std::span<const std::uint32_t>,
                                        const std::vector<bool>&, std::size_t);
template std::vector<RecommendationList> rank_topk(Model<float>&, std::span<const std::uint32_t>, const ItemSets&,
                                                   const std::vector<bool>&, const RankOptions&);
template std::vector<RecommendationList> rank_topk(Model<double>&, std::span<const std::uint32_t>, const ItemSets&,
                                                   const std::vector<bool>&, const RankOptions&);

}  // namespace mmrec
