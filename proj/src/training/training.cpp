#include "mmrec/training.hpp"

#include <algorithm>
#include <cmath>

#include "mmrec/log.hpp"

namespace mmrec {

template <typename Real>
Var<Real> bpr_loss(Tape<Real>& tape, Var<Real> pos, Var<Real> neg) {
  return tape.mean(tape.softplus(tape.sub(neg, pos)));
}

double bpr_loss(double pos, double neg) {
  if (!std::isfinite(pos) || !std::isfinite(neg)) throw NumericError("bpr_loss: non-finite score");
  const double x = neg - pos;
  // softplus(x) = max(x, 0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

template Var<float> bpr_loss(Tape<float>&, Var<float>, Var<float>);
template Var<double> bpr_loss(Tape<double>&, Var<double>, Var<double>);

TripleSampler::TripleSampler(const std::vector<UserItem>& train, std::size_t n_users,
                             std::size_t n_items)
    : n_items_(n_items), positives_(items_by_user(train, n_users)) {
  std::size_t saturated = 0;
  for (std::uint32_t u = 0; u < n_users; ++u) {
    const auto& items = positives_[u];
    if (!items.empty() && items.back() >= n_items) {
      throw std::out_of_range("TripleSampler: item id out of range");
    }
    if (items.empty()) continue;
    if (items.size() >= n_items) {
      ++saturated;
      continue;
    }
    eligible_.push_back(u);
  }
  if (saturated > 0) {
    log::warn(std::to_string(saturated) +
              " user(s) interacted with every item and are skipped by negative sampling");
  }
  if (eligible_.empty()) throw std::invalid_argument("TripleSampler: no user can be sampled");
}

bool TripleSampler::is_positive(std::uint32_t user, std::uint32_t item) const {
  const auto& items = positives_.at(user);
  return std::binary_search(items.begin(), items.end(), item);
}

Triple TripleSampler::sample(Rng& rng) const {
  const auto user = eligible_[rng.uniform_index(eligible_.size())];
  const auto& items = positives_[user];
  const auto pos = items[rng.uniform_index(items.size())];
  std::uint32_t neg = 0;
  do {
    neg = static_cast<std::uint32_t>(rng.uniform_index(n_items_));
  } while (std::binary_search(items.begin(), items.end(), neg));
  return {user, pos, neg};
}

std::vector<Triple> TripleSampler::sample(std::size_t count, Rng& rng) const {
  std::vector<Triple> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(rng));
  return out;
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void TrainerConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("trainer: epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("trainer: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("trainer: learning_rate must be positive");
  }
  if (!(reg_weight >= 0.0) || !std::isfinite(reg_weight)) {
    throw std::invalid_argument("trainer: reg_weight must be non-negative");
  }
}

template <typename Real>
Optimizer<Real>::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
}

template <typename Real>
void Optimizer<Real>::step(ParameterSet<Real>& params) {
  const std::size_t t = t_ + 1;
  if (kind_ == OptimizerKind::kAdam && m_.size() != params.size()) {
    m_.resize(params.size());
    v_.resize(params.size());
  }
  std::vector<std::vector<Real>> updated;
  updated.reserve(params.size());
  std::size_t k = 0;
  for (auto& p : params) {
    const auto g = p.grad.values();
    const auto x = p.value.values();
    std::vector<Real> next(x.begin(), x.end());
    if (!g.empty()) {
      if (g.size() != x.size()) throw ShapeError("optimizer: gradient shape mismatch for " + p.name);
      if (kind_ == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < x.size(); ++i) next[i] = static_cast<Real>(x[i] - lr_ * g[i]);
      } else {
        auto& m = m_[k];
        auto& v = v_[k];
        if (m.size() != x.size()) {
          m.assign(x.size(), 0.0);
          v.assign(x.size(), 0.0);
        }
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
          m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
          v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * static_cast<double>(g[i]) * g[i];
          const double mhat = m[i] / c1;
          const double vhat = v[i] / c2;
          next[i] = static_cast<Real>(x[i] - lr_ * mhat / (std::sqrt(vhat) + kEpsilon));
        }
      }
      for (auto v : next) {
        if (!std::isfinite(v)) throw NumericError("optimizer: non-finite update for " + p.name);
      }
    }
    updated.push_back(std::move(next));
    ++k;
  }
  k = 0;
  for (auto& p : params) {
    std::copy(updated[k].begin(), updated[k].end(), p.value.values().begin());
    ++k;
  }
  t_ = t;
}

template class Optimizer<float>;
template class Optimizer<double>;

template <typename Real>
Var<Real> l2_regularizer(Tape<Real>& tape, ParameterSet<Real>& params, double alpha) {
  Var<Real> total = tape.constant(Matrix<Real>(1, 1));
  if (alpha == 0.0) return total;
  for (auto& p : params) {
    if (p.value.empty()) continue;
    const auto v = tape.param(p);
    total = tape.add(total, tape.sum(tape.mul(v, v)));
  }
  return tape.scale(total, static_cast<Real>(0.5 * alpha));
}

template Var<float> l2_regularizer(Tape<float>&, ParameterSet<float>&, double);
template Var<double> l2_regularizer(Tape<double>&, ParameterSet<double>&, double);

void GridSpec::validate() const {
  if (learning_rates.empty() || reg_weights.empty()) throw std::invalid_argument("grid: empty grid");
  if (size() > kMaxPoints) {
    throw std::invalid_argument("grid: " + std::to_string(size()) + " points exceed the cap of " +
                                std::to_string(kMaxPoints));
  }
  for (auto lr : learning_rates) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("grid: learning rates must be positive");
  }
  for (auto a : reg_weights) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("grid: regularization weights must be non-negative");
  }
}

std::pair<double, double> GridSpec::point(std::size_t index) const {
  if (index >= size()) throw std::out_of_range("grid: point index out of range");
  return {learning_rates[index / reg_weights.size()], reg_weights[index % reg_weights.size()]};
}

}  // namespace mmrec
