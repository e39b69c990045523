#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmrec/autograd.hpp"
#include "mmrec/dataset.hpp"
#include "mmrec/rng.hpp"

namespace mmrec {

struct Triple {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;

  bool operator==(const Triple&) const = default;
};

/// mean(-ln sigmoid(pos - neg)) = mean(softplus(neg - pos)) over the rows
/// of two n x 1 score columns.
template <typename Real>
Var<Real> bpr_loss(Tape<Real>& tape, Var<Real> pos, Var<Real> neg);

/// Scalar form, -ln sigmoid(pos - neg). Throws NumericError on non-finite input.
double bpr_loss(double pos, double neg);

/// Uniform BPR triples: a user uniformly among the eligible ones, a
/// positive uniformly from the user's train items, and a negative uniformly
/// from the rest of the catalog (by rejection). Users with no train items
/// or whose train items cover the catalog are never drawn; the latter are
/// reported once as a warning.
class TripleSampler {
 public:
  TripleSampler(const std::vector<UserItem>& train, std::size_t n_users, std::size_t n_items);

  Triple sample(Rng& rng) const;
  std::vector<Triple> sample(std::size_t count, Rng& rng) const;

  std::size_t eligible_users() const { return eligible_.size(); }
  std::size_t n_items() const { return n_items_; }
  bool is_positive(std::uint32_t user, std::uint32_t item) const;

 private:
  std::size_t n_items_;
  std::vector<std::vector<std::uint32_t>> positives_;
  std::vector<std::uint32_t> eligible_;
};

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainerConfig {
  int epochs = 200;
  std::size_t batch_size = 1024;
  double learning_rate = 1e-3;
  /// Weight of the L2 term 0.5 * sum ||theta||^2 over every parameter.
  double reg_weight = 1e-5;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

/// Applies accumulated gradients. Moment buffers are keyed by parameter
/// position in the set, so one optimizer serves one ParameterSet.
template <typename Real>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);

  /// theta <- theta - update(grad). Throws NumericError if any updated value
  /// is not finite (the parameters are left unchanged in that case).
  void step(ParameterSet<Real>& params);
  std::size_t steps() const { return t_; }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  OptimizerKind kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// alpha * 0.5 * sum of squared entries over every parameter in the set.
template <typename Real>
Var<Real> l2_regularizer(Tape<Real>& tape, ParameterSet<Real>& params, double alpha);

/// Learning-rate x regularization candidates, at most kMaxPoints combined.
struct GridSpec {
  static constexpr std::size_t kMaxPoints = 10;

  std::vector<double> learning_rates{1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
  std::vector<double> reg_weights{1e-5, 1e-2};

  std::size_t size() const { return learning_rates.size() * reg_weights.size(); }
  /// Rejects empty or oversized grids and non-positive / negative values.
  void validate() const;
  /// Point index -> (lr, alpha); index = lr_index * |alphas| + alpha_index.
  std::pair<double, double> point(std::size_t index) const;
  bool operator==(const GridSpec&) const = default;
};

}  // namespace mmrec
