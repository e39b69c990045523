#include "mmrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "mmrec/rng.hpp"

namespace mmrec {

namespace {

std::string padded(char prefix, std::size_t index, std::size_t total) {
  const auto width = std::to_string(total == 0 ? 0 : total - 1).size();
  auto digits = std::to_string(index);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticParams& params) {
  if (params.n_users == 0 || params.n_items == 0) {
    throw std::invalid_argument("generate_synthetic: sizes must be positive");
  }
  if (params.dims.empty()) throw std::invalid_argument("generate_synthetic: no modalities");
  if (!(params.noise >= 0.0) || !std::isfinite(params.noise)) {
    throw std::invalid_argument("generate_synthetic: noise must be finite and non-negative");
  }
  const auto per_user =
      static_cast<std::size_t>(std::llround(params.density * static_cast<double>(params.n_items)));
  if (!(params.density > 0.0) || per_user < 1 || per_user >= params.n_items) {
    throw std::invalid_argument(
        "generate_synthetic: density " + std::to_string(params.density) + " over " +
        std::to_string(params.n_items) +
        " items is infeasible (each user needs at least one positive and one negative)");
  }

  Rng rng(params.seed);
  SyntheticData data;
  std::vector<std::string> item_ids(params.n_items);
  for (std::size_t i = 0; i < params.n_items; ++i) item_ids[i] = padded('i', i, params.n_items);

  std::vector<Matrix<double>> prefs;
  for (const auto& [modality, dim] : params.dims) {
    if (dim == 0) throw std::invalid_argument("generate_synthetic: modality dim must be positive");
    ModalityFeatures f;
    f.modality = modality;
    f.ids = item_ids;
    f.values = Matrix<float>(params.n_items, dim);
    for (auto& v : f.values.values()) v = static_cast<float>(rng.normal());
    data.features.push_back(std::move(f));
    Matrix<double> p(params.n_users, dim);
    for (auto& v : p.values()) v = rng.normal();
    prefs.push_back(std::move(p));
  }

  data.affinity = Matrix<double>(params.n_users, params.n_items);
  for (std::size_t m = 0; m < params.dims.size(); ++m) {
    const auto& f = data.features[m].values;
    const double scale = 1.0 / (std::sqrt(static_cast<double>(f.cols())) * params.dims.size());
    for (std::size_t u = 0; u < params.n_users; ++u) {
      for (std::size_t i = 0; i < params.n_items; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < f.cols(); ++c) acc += prefs[m](u, c) * f(i, c);
        data.affinity(u, i) += acc * scale;
      }
    }
  }

  std::vector<double> score(params.n_items);
  std::vector<std::size_t> order(params.n_items);
  for (std::size_t u = 0; u < params.n_users; ++u) {
    for (std::size_t i = 0; i < params.n_items; ++i) {
      score[i] = data.affinity(u, i) + (params.noise > 0.0 ? params.noise * rng.normal() : 0.0);
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    std::vector<std::size_t> chosen(order.begin(), order.begin() + per_user);
    std::sort(chosen.begin(), chosen.end());
    const auto user_id = padded('u', u, params.n_users);
    for (auto i : chosen) data.log.records.push_back({user_id, item_ids[i], std::nullopt, std::nullopt});
  }
  return data;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "interactions.tsv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / "interactions.tsv").string());
    for (const auto& r : data.log.records) out << r.user << '\t' << r.item << '\n';
  }
  for (const auto& f : data.features) {
    write_features(f, dir / (std::string(to_string(f.modality)) + ".bin"));
  }
}

}  // namespace mmrec
