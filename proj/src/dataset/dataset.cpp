#include "mmrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& reason)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + reason), line_(line) {}

ParseError::ParseError(const std::string& source, const std::string& reason)
    : std::runtime_error(source + ": " + reason) {}

InteractionLog parse_interactions(const std::filesystem::path& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open interaction file " + path.string());
  return parse_interactions(in, options, path.string());
}

InteractionLog parse_interactions(std::istream& in, const ParseOptions& options,
                                  const std::string& source) {
  std::vector<Interaction> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && options.header) continue;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() < 2 || cols.size() > 4) {
      throw ParseError(source, line_no,
                       "expected 2 to 4 tab-separated columns, got " + std::to_string(cols.size()));
    }
    Interaction rec;
    rec.user = std::string(cols[0]);
    rec.item = std::string(cols[1]);
    if (rec.user.empty() || rec.item.empty()) throw ParseError(source, line_no, "empty id");
    if (cols.size() >= 3 && !cols[2].empty()) {
      float rating = 0.0f;
      if (!parse_number(cols[2], rating) || !std::isfinite(rating)) {
        throw ParseError(source, line_no, "unparsable rating '" + std::string(cols[2]) + "'");
      }
      rec.rating = rating;
    }
    if (cols.size() == 4 && !cols[3].empty()) {
      std::int64_t ts = 0;
      if (!parse_number(cols[3], ts)) {
        throw ParseError(source, line_no, "unparsable timestamp '" + std::string(cols[3]) + "'");
      }
      rec.timestamp = ts;
    }
    records.push_back(std::move(rec));
  }
  return deduplicate(std::move(records));
}

InteractionLog deduplicate(std::vector<Interaction> records) {
  std::map<std::pair<std::string, std::string>, std::size_t> slot;
  InteractionLog out;
  for (auto& rec : records) {
    auto key = std::make_pair(rec.user, rec.item);
    const auto it = slot.find(key);
    if (it == slot.end()) {
      slot.emplace(std::move(key), out.records.size());
      out.records.push_back(std::move(rec));
      continue;
    }
    auto& kept = out.records[it->second];
    if (rec.timestamp.value_or(0) >= kept.timestamp.value_or(0)) kept = std::move(rec);
  }
  return out;
}

InteractionLog k_core_filter(const InteractionLog& log, int k) {
  if (k < 1) throw std::invalid_argument("k_core_filter: k must be >= 1");
  std::vector<const Interaction*> alive;
  alive.reserve(log.size());
  for (const auto& r : log.records) alive.push_back(&r);
  const auto threshold = static_cast<std::size_t>(k);
  while (true) {
    std::unordered_map<std::string_view, std::size_t> user_deg, item_deg;
    for (const auto* r : alive) {
      ++user_deg[r->user];
      ++item_deg[r->item];
    }
    std::vector<const Interaction*> next;
    next.reserve(alive.size());
    for (const auto* r : alive) {
      if (user_deg[r->user] >= threshold && item_deg[r->item] >= threshold) next.push_back(r);
    }
    if (next.size() == alive.size()) break;
    alive = std::move(next);
  }
  InteractionLog out;
  out.records.reserve(alive.size());
  for (const auto* r : alive) out.records.push_back(*r);
  return out;
}

IdMap IdMap::from_ids(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  IdMap map;
  map.ids_ = std::move(ids);
  map.index_.reserve(map.ids_.size());
  for (std::uint32_t i = 0; i < map.ids_.size(); ++i) map.index_.emplace(map.ids_[i], i);
  return map;
}

std::optional<std::uint32_t> IdMap::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Dataset Dataset::from_log(const InteractionLog& log) {
  std::vector<std::string> users, items;
  for (const auto& r : log.records) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  auto user_map = IdMap::from_ids(std::move(users));
  auto item_map = IdMap::from_ids(std::move(items));
  std::vector<UserItem> pairs;
  pairs.reserve(log.size());
  for (const auto& r : log.records) pairs.push_back({*user_map.find(r.user), *item_map.find(r.item)});
  return from_pairs(std::move(user_map), std::move(item_map), std::move(pairs));
}

Dataset Dataset::from_pairs(IdMap users, IdMap items, std::vector<UserItem> interactions) {
  Dataset ds;
  ds.users = std::move(users);
  ds.items = std::move(items);
  std::sort(interactions.begin(), interactions.end());
  if (std::adjacent_find(interactions.begin(), interactions.end()) != interactions.end()) {
    throw std::invalid_argument("dataset: duplicate (user, item) pair");
  }
  ds.user_degree.assign(ds.n_users(), 0);
  ds.item_degree.assign(ds.n_items(), 0);
  for (const auto& p : interactions) {
    if (p.user >= ds.n_users() || p.item >= ds.n_items()) {
      throw std::out_of_range("dataset: interaction id out of range");
    }
    ++ds.user_degree[p.user];
    ++ds.item_degree[p.item];
  }
  ds.interactions = std::move(interactions);
  return ds;
}

Split holdout_split(const Dataset& ds, const SplitOptions& options) {
  if (!(options.train_ratio > 0.0 && options.train_ratio < 1.0)) {
    throw std::invalid_argument("holdout_split: train_ratio must lie in (0, 1)");
  }
  if (!(options.validation_fraction >= 0.0 && options.validation_fraction <= 1.0)) {
    throw std::invalid_argument("holdout_split: validation_fraction must lie in [0, 1]");
  }
  Split split;
  split.users = ds.users;
  split.items = ds.items;
  Rng rng(options.seed);
  const auto per_user = items_by_user(ds.interactions, ds.n_users());
  for (std::uint32_t u = 0; u < per_user.size(); ++u) {
    auto items = per_user[u];
    if (items.empty()) continue;
    rng.shuffle(std::span<std::uint32_t>(items));
    const auto n = items.size();
    // The epsilon keeps exact products such as 10 * 0.8 from rounding down.
    auto n_train = static_cast<std::size_t>(std::floor(n * options.train_ratio + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, n);
    const auto held = n - n_train;
    const auto n_val = std::min(
        held, static_cast<std::size_t>(std::ceil(held * options.validation_fraction - 1e-9)));
    for (std::size_t j = 0; j < n; ++j) {
      const UserItem p{u, items[j]};
      if (j < n_train) {
        split.train.push_back(p);
      } else if (j < n_train + n_val) {
        split.validation.push_back(p);
      } else {
        split.test.push_back(p);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::vector<std::uint32_t>> items_by_user(const std::vector<UserItem>& part,
                                                      std::size_t n_users) {
  std::vector<std::vector<std::uint32_t>> out(n_users);
  for (const auto& p : part) {
    if (p.user >= n_users) throw std::out_of_range("items_by_user: user id out of range");
    out[p.user].push_back(p.item);
  }
  for (auto& items : out) std::sort(items.begin(), items.end());
  return out;
}

DatasetStats stats(std::size_t users, std::size_t items, std::size_t interactions) {
  if (users == 0 || items == 0) throw std::invalid_argument("stats: empty dataset");
  DatasetStats s;
  s.users = users;
  s.items = items;
  s.interactions = interactions;
  const double cells = static_cast<double>(users) * static_cast<double>(items);
  s.sparsity = (1.0 - static_cast<double>(interactions) / cells) * 100.0;
  return s;
}

DatasetStats stats(const Dataset& ds) {
  return stats(ds.n_users(), ds.n_items(), ds.interactions.size());
}

namespace {

void write_pairs(const Split& split, const std::vector<UserItem>& part,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& p : part) out << split.users.id(p.user) << '\t' << split.items.id(p.item) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::filesystem::path& path) {
  const auto log = parse_interactions(path);
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(log.size());
  for (const auto& r : log.records) out.emplace_back(r.user, r.item);
  return out;
}

}  // namespace

void write_split(const Split& split, const SplitManifest& manifest,
                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_pairs(split, split.train, dir / "train.tsv");
  write_pairs(split, split.validation, dir / "validation.tsv");
  write_pairs(split, split.test, dir / "test.tsv");
  nlohmann::ordered_json j;
  j["seed"] = manifest.seed;
  j["train_ratio"] = manifest.train_ratio;
  j["validation_fraction"] = manifest.validation_fraction;
  j["k_core"] = manifest.k_core;
  j["users"] = split.n_users();
  j["items"] = split.n_items();
  j["train"] = split.train.size();
  j["validation"] = split.validation.size();
  j["test"] = split.test.size();
  std::ofstream out(dir / "split.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + (dir / "split.json").string());
}

Split read_split(const std::filesystem::path& dir, SplitManifest* manifest) {
  const auto sidecar = dir / "split.json";
  std::ifstream in(sidecar, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + sidecar.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (manifest != nullptr) {
      manifest->seed = j.at("seed").get<std::uint64_t>();
      manifest->train_ratio = j.at("train_ratio").get<double>();
      manifest->validation_fraction = j.at("validation_fraction").get<double>();
      manifest->k_core = j.at("k_core").get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(sidecar.string(), e.what());
  }
  const auto train = read_pairs(dir / "train.tsv");
  const auto validation = read_pairs(dir / "validation.tsv");
  const auto test = read_pairs(dir / "test.tsv");
  std::vector<std::string> users, items;
  for (const auto* part : {&train, &validation, &test}) {
    for (const auto& [u, i] : *part) {
      users.push_back(u);
      items.push_back(i);
    }
  }
  Split split;
  split.users = IdMap::from_ids(std::move(users));
  split.items = IdMap::from_ids(std::move(items));
  auto convert = [&](const std::vector<std::pair<std::string, std::string>>& part) {
    std::vector<UserItem> out;
    out.reserve(part.size());
    for (const auto& [u, i] : part) out.push_back({*split.users.find(u), *split.items.find(i)});
    std::sort(out.begin(), out.end());
    return out;
  };
  split.train = convert(train);
  split.validation = convert(validation);
  split.test = convert(test);
  if (j.contains("users") && j["users"].get<std::size_t>() != split.n_users()) {
    throw ParseError(sidecar.string(), "user count does not match the split files");
  }
  if (j.contains("items") && j["items"].get<std::size_t>() != split.n_items()) {
    throw ParseError(sidecar.string(), "item count does not match the split files");
  }
  return split;
}

}  // namespace mmrec
