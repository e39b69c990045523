#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/modality.hpp"

namespace mmrec {

struct SyntheticParams {
  std::size_t n_users = 50;
  std::size_t n_items = 200;
  std::vector<std::pair<Modality, std::size_t>> dims{{Modality::kVisual, 16},
                                                     {Modality::kTextual, 8}};
  double noise = 0.0;
  /// Fraction of the catalog each user interacts with.
  double density = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const SyntheticParams&) const = default;
};

/// Planted-preference dataset. Each user has a preference vector per
/// modality; affinity(u, i) is the mean over modalities of
/// pref_u^m . f_i^m / sqrt(d_m). Every user interacts with the
/// round(density * n_items) items whose affinity plus noise * N(0, 1) is
/// highest, i.e. those above the user's score quantile.
struct SyntheticData {
  InteractionLog log;
  std::vector<ModalityFeatures> features;
  Matrix<double> affinity;  // generation order: user r, item c
};

/// Throws std::invalid_argument for empty sizes or a density that leaves a
/// user with no positives or no negatives.
SyntheticData generate_synthetic(const SyntheticParams& params);

/// Writes interactions.tsv and one <modality>.bin feature file per modality.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace mmrec
