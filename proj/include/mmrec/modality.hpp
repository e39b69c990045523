#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/tensor.hpp"

namespace mmrec {

enum class Modality { kVisual, kTextual, kAudio };

inline constexpr std::array<Modality, 3> kAllModalities{Modality::kVisual, Modality::kTextual,
                                                       Modality::kAudio};

std::string_view to_string(Modality m);
/// Accepts "visual", "textual", "audio"; throws std::invalid_argument otherwise.
Modality parse_modality(std::string_view name);

/// One modality's feature rows keyed by item id.
struct ModalityFeatures {
  Modality modality = Modality::kVisual;
  std::vector<std::string> ids;
  Matrix<float> values;  // ids.size() x dim

  std::size_t dim() const { return values.cols(); }
  std::size_t count() const { return ids.size(); }
};

enum class FeatureFormat { kBinary, kText };

/// Reads a feature file. The binary format is a one-line JSON header
/// {"modality":..,"dim":..,"count":..} followed by `count` records of
/// u16 LE id length, id bytes, dim x f32 LE. The text format is one
/// `id<TAB>v1<TAB>...<TAB>vdim` line per item.
ModalityFeatures load_features(const std::filesystem::path& path, Modality expected,
                               FeatureFormat format = FeatureFormat::kBinary);
ModalityFeatures read_features(std::istream& in, Modality expected, FeatureFormat format,
                               const std::string& source = "<stream>");

void write_features(const ModalityFeatures& features, const std::filesystem::path& path,
                    FeatureFormat format = FeatureFormat::kBinary);
std::string encode_features(const ModalityFeatures& features);

/// Scales every nonzero row to unit L2 norm. Zero rows stay zero; each one
/// is counted in *zero_rows (when given) and reported as a warning.
ModalityFeatures l2_standardize(ModalityFeatures features, std::size_t* zero_rows = nullptr);

enum class MissingPolicy { kError, kZeroFill, kMeanImpute };

std::string_view to_string(MissingPolicy policy);
MissingPolicy parse_missing_policy(std::string_view name);

/// Per-modality feature matrices bound to the dense item ids of a dataset,
/// with an availability mask. Immutable after construction.
class MultimodalStore {
 public:
  MultimodalStore() = default;
  /// Rows whose id is not in `items` are ignored. With `normalize`, rows are
  /// L2-standardized before missing rows are resolved.
  MultimodalStore(const IdMap& items, std::vector<ModalityFeatures> features,
                  MissingPolicy policy = MissingPolicy::kError, bool normalize = false);

  std::size_t n_items() const { return n_items_; }
  MissingPolicy policy() const { return policy_; }
  const std::vector<Modality>& modalities() const { return modalities_; }
  bool contains(Modality m) const;
  std::size_t dim(Modality m) const;

  /// Availability mask entry: a row for (item, m) exists.
  bool available(std::uint32_t item, Modality m) const;
  std::size_t missing_count(Modality m) const;

  /// The item's feature vector for m, resolved by the missing policy.
  std::vector<float> extract(std::uint32_t item, Modality m) const;
  /// n_items x dim matrix with every row resolved by the missing policy.
  Matrix<float> matrix(Modality m) const;

 private:
  struct Slot {
    Matrix<float> rows;  // n_items x dim, zero where missing
    std::vector<bool> present;
    std::vector<float> column_mean;
    std::size_t missing = 0;
  };
  const Slot& slot(Modality m) const;

  std::size_t n_items_ = 0;
  MissingPolicy policy_ = MissingPolicy::kError;
  std::vector<Modality> modalities_;
  std::vector<Slot> slots_;
  std::vector<std::string> item_ids_;
};

}  // namespace mmrec
