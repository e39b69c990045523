#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmrec/models.hpp"

namespace mmrec::detail {

struct BatchIndex {
  std::vector<std::uint32_t> users;
  std::vector<std::uint32_t> pos;
  std::vector<std::uint32_t> neg;

  explicit BatchIndex(std::span<const Triple> batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    users.reserve(batch.size());
    pos.reserve(batch.size());
    neg.reserve(batch.size());
    for (const auto& t : batch) {
      users.push_back(t.user);
      pos.push_back(t.pos);
      neg.push_back(t.neg);
    }
  }
};

inline std::vector<std::uint32_t> shifted(std::span<const std::uint32_t> ids, std::size_t base) {
  std::vector<std::uint32_t> out(ids.begin(), ids.end());
  for (auto& v : out) v += static_cast<std::uint32_t>(base);
  return out;
}

inline std::string param_name(const char* prefix, Modality m) {
  return std::string(prefix) + "." + std::string(to_string(m));
}

/// Runs `build` on an inference tape and returns the value it produced.
template <typename Real, typename Fn>
Matrix<Real> evaluate(Fn&& build) {
  Tape<Real> tape;
  tape.set_training(false);
  return build(tape).value();
}

}  // namespace mmrec::detail
