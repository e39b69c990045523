#include "mmrec/modality.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "mmrec/binary_io.hpp"
#include "mmrec/log.hpp"

namespace mmrec {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kVisual: return "visual";
    case Modality::kTextual: return "textual";
    case Modality::kAudio: return "audio";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  for (auto m : kAllModalities) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown modality '" + std::string(name) +
                              "' (expected visual, textual or audio)");
}

std::string_view to_string(MissingPolicy policy) {
  switch (policy) {
    case MissingPolicy::kError: return "error";
    case MissingPolicy::kZeroFill: return "zero_fill";
    case MissingPolicy::kMeanImpute: return "mean_impute";
  }
  return "unknown";
}

MissingPolicy parse_missing_policy(std::string_view name) {
  for (auto p : {MissingPolicy::kError, MissingPolicy::kZeroFill, MissingPolicy::kMeanImpute}) {
    if (to_string(p) == name) return p;
  }
  throw std::invalid_argument("unknown missing-modality policy '" + std::string(name) +
                              "' (expected error, zero_fill or mean_impute)");
}

namespace {

void check_ids(const ModalityFeatures& f, const std::string& source) {
  std::unordered_set<std::string_view> seen;
  for (const auto& id : f.ids) {
    if (id.empty()) throw ParseError(source, "empty item id");
    if (!seen.insert(id).second) throw ParseError(source, "duplicate item id '" + id + "'");
  }
  for (std::size_t r = 0; r < f.count(); ++r) {
    for (auto v : f.values.row(r)) {
      if (!std::isfinite(v)) throw ParseError(source, "non-finite value for item '" + f.ids[r] + "'");
    }
  }
}

ModalityFeatures read_binary(std::istream& in, Modality expected, const std::string& source) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError(source, 1, "missing header line");
  std::size_t dim = 0, count = 0;
  try {
    const auto j = nlohmann::json::parse(header);
    const auto declared = parse_modality(j.at("modality").get<std::string>());
    if (declared != expected) {
      throw ParseError(source, 1,
                       "file declares modality '" + std::string(to_string(declared)) +
                           "' but '" + std::string(to_string(expected)) + "' was expected");
    }
    dim = j.at("dim").get<std::size_t>();
    count = j.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 1, std::string("bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, 1, e.what());
  }
  if (dim == 0) throw ParseError(source, 1, "dim must be positive");

  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t row_bytes = dim * 4;
  ModalityFeatures f;
  f.modality = expected;
  f.ids.reserve(count);
  f.values = Matrix<float>(count, dim);
  std::size_t pos = 0;
  auto truncated = [&](std::size_t record, std::size_t needed_here) {
    // Lower bound on the payload size: later records have at least an empty id.
    const std::size_t expected_bytes = needed_here + (count - record - 1) * (2 + row_bytes);
    return ParseError(source, "truncated payload at record " + std::to_string(record) +
                                  ": expected at least " + std::to_string(expected_bytes) +
                                  " bytes, got " + std::to_string(payload.size()));
  };
  for (std::size_t r = 0; r < count; ++r) {
    if (pos + 2 > payload.size()) throw truncated(r, pos + 2 + row_bytes);
    const std::size_t id_len = binary::get_u16(payload.data() + pos);
    const std::size_t end = pos + 2 + id_len + row_bytes;
    if (end > payload.size()) throw truncated(r, end);
    f.ids.emplace_back(payload.data() + pos + 2, id_len);
    const char* p = payload.data() + pos + 2 + id_len;
    auto row = f.values.row(r);
    for (std::size_t c = 0; c < dim; ++c) row[c] = binary::get_f32(p + 4 * c);
    pos = end;
  }
  if (pos != payload.size()) {
    throw ParseError(source, "payload has " + std::to_string(payload.size() - pos) +
                                 " trailing bytes after " + std::to_string(count) + " records");
  }
  check_ids(f, source);
  return f;
}

ModalityFeatures read_text(std::istream& in, Modality expected, const std::string& source) {
  ModalityFeatures f;
  f.modality = expected;
  std::vector<float> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cols;
    std::string_view rest(line);
    while (true) {
      const auto tab = rest.find('\t');
      cols.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    if (cols.size() < 2) throw ParseError(source, line_no, "expected an id and at least one value");
    if (dim == 0) dim = cols.size() - 1;
    if (cols.size() - 1 != dim) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(dim) + " values, got " +
                           std::to_string(cols.size() - 1));
    }
    f.ids.emplace_back(cols[0]);
    for (std::size_t c = 1; c < cols.size(); ++c) {
      float v = 0.0f;
      const auto* end = cols[c].data() + cols[c].size();
      const auto [ptr, ec] = std::from_chars(cols[c].data(), end, v);
      if (ec != std::errc() || ptr != end) {
        throw ParseError(source, line_no, "unparsable value '" + std::string(cols[c]) + "'");
      }
      values.push_back(v);
    }
  }
  f.values = Matrix<float>(f.ids.size(), dim, std::move(values));
  check_ids(f, source);
  return f;
}

}  // namespace

ModalityFeatures load_features(const std::filesystem::path& path, Modality expected,
                               FeatureFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  return read_features(in, expected, format, path.string());
}

ModalityFeatures read_features(std::istream& in, Modality expected, FeatureFormat format,
                               const std::string& source) {
  return format == FeatureFormat::kBinary ? read_binary(in, expected, source)
                                          : read_text(in, expected, source);
}

std::string encode_features(const ModalityFeatures& features) {
  if (features.values.rows() != features.ids.size()) {
    throw std::invalid_argument("encode_features: row count does not match id count");
  }
  nlohmann::ordered_json header;
  header["modality"] = std::string(to_string(features.modality));
  header["dim"] = features.dim();
  header["count"] = features.count();
  std::string out = header.dump() + "\n";
  out.reserve(out.size() + features.count() * (8 + 4 * features.dim()));
  for (std::size_t r = 0; r < features.count(); ++r) {
    const auto& id = features.ids[r];
    if (id.size() > 0xffff) throw std::invalid_argument("encode_features: id longer than 65535 bytes");
    binary::put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
    for (auto v : features.values.row(r)) binary::put_f32(out, v);
  }
  return out;
}

void write_features(const ModalityFeatures& features, const std::filesystem::path& path,
                    FeatureFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  if (format == FeatureFormat::kBinary) {
    out << encode_features(features);
  } else {
    out.precision(9);
    for (std::size_t r = 0; r < features.count(); ++r) {
      out << features.ids[r];
      for (auto v : features.values.row(r)) out << '\t' << v;
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ModalityFeatures l2_standardize(ModalityFeatures features, std::size_t* zero_rows) {
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < features.values.rows(); ++r) {
    auto row = features.values.row(r);
    double norm = 0.0;
    for (auto v : row) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      ++zeros;
      continue;
    }
    for (auto& v : row) v = static_cast<float>(v / norm);
  }
  if (zeros > 0) {
    log::warn(std::to_string(zeros) + " zero " + std::string(to_string(features.modality)) +
              " feature row(s) left unnormalized");
  }
  if (zero_rows != nullptr) *zero_rows += zeros;
  return features;
}

MultimodalStore::MultimodalStore(const IdMap& items, std::vector<ModalityFeatures> features,
                                 MissingPolicy policy, bool normalize)
    : n_items_(items.size()), policy_(policy), item_ids_(items.ids()) {
  for (auto& f : features) {
    if (contains(f.modality)) {
      throw std::invalid_argument("modality '" + std::string(to_string(f.modality)) +
                                  "' supplied twice");
    }
    if (normalize) f = l2_standardize(std::move(f));
    Slot s;
    s.rows = Matrix<float>(n_items_, f.dim());
    s.present.assign(n_items_, false);
    std::size_t unbound = 0;
    for (std::size_t r = 0; r < f.count(); ++r) {
      const auto item = items.find(f.ids[r]);
      if (!item) {
        ++unbound;
        continue;
      }
      s.present[*item] = true;
      const auto src = f.values.row(r);
      std::copy(src.begin(), src.end(), s.rows.row(*item).begin());
    }
    if (unbound > 0) {
      log::info(std::to_string(unbound) + " " + std::string(to_string(f.modality)) +
                " feature rows have no matching item and were ignored");
    }
    s.column_mean.assign(f.dim(), 0.0f);
    std::vector<double> acc(f.dim(), 0.0);
    std::size_t available = 0;
    for (std::size_t i = 0; i < n_items_; ++i) {
      if (!s.present[i]) {
        ++s.missing;
        continue;
      }
      ++available;
      const auto row = s.rows.row(i);
      for (std::size_t c = 0; c < f.dim(); ++c) acc[c] += row[c];
    }
    if (available > 0) {
      for (std::size_t c = 0; c < f.dim(); ++c) s.column_mean[c] = static_cast<float>(acc[c] / available);
    }
    if (s.missing > 0 && policy_ != MissingPolicy::kError) {
      log::warn(std::to_string(s.missing) + " item(s) lack " + std::string(to_string(f.modality)) +
                " features; resolved by " + std::string(to_string(policy_)));
    }
    modalities_.push_back(f.modality);
    slots_.push_back(std::move(s));
  }
}

bool MultimodalStore::contains(Modality m) const {
  return std::find(modalities_.begin(), modalities_.end(), m) != modalities_.end();
}

const MultimodalStore::Slot& MultimodalStore::slot(Modality m) const {
  const auto it = std::find(modalities_.begin(), modalities_.end(), m);
  if (it == modalities_.end()) {
    throw std::invalid_argument("modality '" + std::string(to_string(m)) + "' is not loaded");
  }
  return slots_[static_cast<std::size_t>(it - modalities_.begin())];
}

std::size_t MultimodalStore::dim(Modality m) const { return slot(m).rows.cols(); }

bool MultimodalStore::available(std::uint32_t item, Modality m) const {
  if (item >= n_items_) throw std::out_of_range("item id out of range");
  return slot(m).present[item];
}

std::size_t MultimodalStore::missing_count(Modality m) const { return slot(m).missing; }

std::vector<float> MultimodalStore::extract(std::uint32_t item, Modality m) const {
  const auto& s = slot(m);
  if (item >= n_items_) throw std::out_of_range("item id out of range");
  if (s.present[item]) {
    const auto row = s.rows.row(item);
    return {row.begin(), row.end()};
  }
  switch (policy_) {
    case MissingPolicy::kError:
      throw std::runtime_error("item '" + item_ids_[item] + "' has no " +
                               std::string(to_string(m)) + " features");
    case MissingPolicy::kZeroFill: return std::vector<float>(s.rows.cols(), 0.0f);
    case MissingPolicy::kMeanImpute: return s.column_mean;
  }
  return {};
}

Matrix<float> MultimodalStore::matrix(Modality m) const {
  const auto& s = slot(m);
  if (s.missing == 0) return s.rows;
  Matrix<float> out = s.rows;
  for (std::uint32_t i = 0; i < n_items_; ++i) {
    if (s.present[i]) continue;
    const auto v = extract(i, m);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace mmrec
