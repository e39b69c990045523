#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/model.hpp"

namespace mmrec {

/// Top-k items for one user, best first.
struct RecommendationList {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> items;
  std::vector<double> scores;

  bool operator==(const RecommendationList&) const = default;
};

/// Sorted item ids per dense user.
using ItemSets = std::vector<std::vector<std::uint32_t>>;

/// Selects the top k of `scores` among items with candidate[i] set and not
/// in `exclude` (sorted). Ties go to the lower item id; fewer than k
/// candidates returns all of them.
template <typename Real>
RecommendationList select_topk(std::uint32_t user, std::span<const Real> scores,
                               std::span<const std::uint32_t> exclude,
                               const std::vector<bool>& candidate, std::size_t k);

struct RankOptions {
  std::size_t k = 20;
  /// Worker threads for top-k selection. Output does not depend on it.
  unsigned threads = 1;
  /// Users scored per model call.
  std::size_t batch_users = 256;
};

/// Ranks the catalog for each user in `users`, excluding the user's
/// train items. `candidate` restricts the catalog (empty = every item).
template <typename Real>
std::vector<RecommendationList> rank_topk(Model<Real>& model, std::span<const std::uint32_t> users,
                                          const ItemSets& train, const std::vector<bool>& candidate,
                                          const RankOptions& options);

enum class ShortHeadRule {
  /// The ceil(20%) most popular items (ties by ascending id).
  kTopFraction,
  /// The smallest popularity prefix covering 80% of train interactions.
  kInteractionShare,
};

std::string_view to_string(ShortHeadRule rule);
ShortHeadRule parse_short_head_rule(std::string_view name);

/// Train popularity over the catalog I_train (items with a train count).
struct PopularityProfile {
  std::vector<std::size_t> counts;  // per dense item
  std::size_t total = 0;            // |R_train|
  std::vector<bool> catalog;        // train count > 0
  std::vector<bool> short_head;     // Phi, a subset of catalog
  std::size_t catalog_size = 0;

  static PopularityProfile from(std::span<const UserItem> train, std::size_t n_items,
                                ShortHeadRule rule = ShortHeadRule::kTopFraction);
  /// count / total, with 0.5 / total for unseen items.
  double probability(std::uint32_t item) const;
};

/// Means over lists of users with at least one relevant item (others are
/// skipped with a warning). Lists are cut at k.
double recall_at_k(std::span<const RecommendationList> lists, const ItemSets& relevant, std::size_t k);
double ndcg_at_k(std::span<const RecommendationList> lists, const ItemSets& relevant, std::size_t k);
double efd_at_k(std::span<const RecommendationList> lists, const ItemSets& relevant,
                const PopularityProfile& popularity, std::size_t k);
/// 1 - Gini coefficient of recommendation counts over the train catalog.
/// Throws std::invalid_argument when nothing is recommended.
double gini_at_k(std::span<const RecommendationList> lists, const PopularityProfile& popularity,
                 std::size_t k);
/// Mean share of long-tail items per list (over k slots).
double aplt_at_k(std::span<const RecommendationList> lists, const PopularityProfile& popularity,
                 std::size_t k);
/// Percent of the train catalog recommended at least once.
double icov_at_k(std::span<const RecommendationList> lists, const PopularityProfile& popularity,
                 std::size_t k);

struct MetricRow {
  std::string dataset;
  std::string model;
  std::size_t k = 0;
  double recall = 0;
  double ndcg = 0;
  double efd = 0;
  double gini = 0;
  double aplt = 0;
  double icov = 0;

  bool operator==(const MetricRow&) const = default;
};

/// All six metrics at each cutoff. Lists must hold at least max(cutoffs) items
/// where available.
std::vector<MetricRow> evaluate_lists(std::span<const RecommendationList> lists, const ItemSets& relevant,
                                      const PopularityProfile& popularity,
                                      std::span<const std::size_t> cutoffs, const std::string& dataset,
                                      const std::string& model);

/// Users with at least one relevant item, ascending.
std::vector<std::uint32_t> users_with_items(const ItemSets& relevant);

void write_metrics_tsv(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_tsv(std::istream& in, const std::string& source);
/// One table per dataset: a row per model, metric columns grouped by
/// cutoff. Per column the best value is bold and the second best underlined.
std::string metrics_markdown(std::span<const MetricRow> rows);

/// user<TAB>item<TAB>rank<TAB>score with raw ids; rank is 1-based.
void write_recommendations(std::ostream& out, std::span<const RecommendationList> lists,
                           const IdMap& users, const IdMap& items);

}  // namespace mmrec
