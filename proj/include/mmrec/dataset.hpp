#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mmrec {

/// Malformed input file. what() carries "<source>:<line>: <reason>".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& reason);
  ParseError(const std::string& source, const std::string& reason);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

struct Interaction {
  std::string user;
  std::string item;
  std::optional<float> rating;
  std::optional<std::int64_t> timestamp;

  bool operator==(const Interaction&) const = default;
};

/// Raw (user, item) records with string ids; at most one record per pair.
struct InteractionLog {
  std::vector<Interaction> records;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct ParseOptions {
  bool header = false;
};

/// Reads `user<TAB>item[<TAB>rating[<TAB>timestamp]]` lines. Blank lines are
/// skipped. Repeated pairs collapse via deduplicate().
InteractionLog parse_interactions(const std::filesystem::path& path,
                                  const ParseOptions& options = {});
InteractionLog parse_interactions(std::istream& in, const ParseOptions& options,
                                  const std::string& source = "<stream>");

/// Keeps one record per (user, item): the one with the latest timestamp
/// (missing counts as 0; on ties the later record wins). Pairs stay in
/// first-occurrence order.
InteractionLog deduplicate(std::vector<Interaction> records);

/// Repeatedly drops records whose user or item has fewer than k records,
/// until every survivor has degree >= k. k must be at least 1.
InteractionLog k_core_filter(const InteractionLog& log, int k = 5);

/// Bijection between string ids and dense ids 0..n-1.
class IdMap {
 public:
  IdMap() = default;
  /// Dense ids follow the sorted order of the distinct input ids.
  static IdMap from_ids(std::vector<std::string> ids);

  std::size_t size() const { return ids_.size(); }
  const std::string& id(std::uint32_t dense) const { return ids_.at(dense); }
  std::optional<std::uint32_t> find(std::string_view id) const;
  const std::vector<std::string>& ids() const { return ids_; }

  bool operator==(const IdMap& other) const { return ids_ == other.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct UserItem {
  std::uint32_t user;
  std::uint32_t item;

  auto operator<=>(const UserItem&) const = default;
};

/// Interactions over dense ids, sorted by (user, item).
struct Dataset {
  IdMap users;
  IdMap items;
  std::vector<UserItem> interactions;
  std::vector<std::uint32_t> user_degree;
  std::vector<std::uint32_t> item_degree;

  static Dataset from_log(const InteractionLog& log);
  static Dataset from_pairs(IdMap users, IdMap items, std::vector<UserItem> interactions);

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
};

struct SplitOptions {
  double train_ratio = 0.8;
  double validation_fraction = 0.5;
  std::uint64_t seed = 42;

  bool operator==(const SplitOptions&) const = default;
};

/// Train / validation / test over the index maps of the source dataset.
/// Each part is sorted by (user, item).
struct Split {
  IdMap users;
  IdMap items;
  std::vector<UserItem> train;
  std::vector<UserItem> validation;
  std::vector<UserItem> test;

  std::size_t n_users() const { return users.size(); }
  std::size_t n_items() const { return items.size(); }
  bool operator==(const Split&) const = default;
};

/// Per user (in dense-id order) draws max(1, floor(n * train_ratio)) items
/// for train by seeded sampling without replacement; the first
/// ceil(held * validation_fraction) of the rest go to validation, the
/// remainder to test.
Split holdout_split(const Dataset& ds, const SplitOptions& options = {});

/// Items per user in `part`, indexed by dense user id, each list sorted.
std::vector<std::vector<std::uint32_t>> items_by_user(const std::vector<UserItem>& part,
                                                      std::size_t n_users);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double sparsity = 0.0;  // percent
};

DatasetStats stats(std::size_t users, std::size_t items, std::size_t interactions);
DatasetStats stats(const Dataset& ds);

/// Metadata written next to a split.
struct SplitManifest {
  std::uint64_t seed = 0;
  double train_ratio = 0.8;
  double validation_fraction = 0.5;
  int k_core = 5;
};

/// Writes train.tsv, validation.tsv, test.tsv (user<TAB>item, string ids) and
/// split.json into dir.
void write_split(const Split& split, const SplitManifest& manifest,
                 const std::filesystem::path& dir);
/// Reads a directory produced by write_split. The dense ids are rebuilt from
/// the union of the three files, which reproduces the original maps.
Split read_split(const std::filesystem::path& dir, SplitManifest* manifest = nullptr);

}  // namespace mmrec
