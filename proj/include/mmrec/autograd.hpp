#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmrec/rng.hpp"
#include "mmrec/sparse.hpp"
#include "mmrec/tensor.hpp"

namespace mmrec {

/// The four partitions of trainable weights: predictor (user/item embeddings
/// and scoring heads), feature extractor, representation projections, and
/// fusion weights.
enum class ParamGroup { kPredictor, kExtractor, kRepresentation, kFusion };

std::string_view to_string(ParamGroup group);

template <typename Real>
struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kPredictor;
  Matrix<Real> value;
  Matrix<Real> grad;
};

/// Named trainable tensors with stable addresses, each in exactly one group.
template <typename Real>
class ParameterSet {
 public:
  using Snapshot = std::vector<Matrix<Real>>;

  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;

  /// Registers a tensor; throws on a duplicate name.
  Parameter<Real>& add(std::string name, ParamGroup group, Matrix<Real> init);

  Parameter<Real>& get(std::string_view name);
  const Parameter<Real>& get(std::string_view name) const;
  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }
  bool owns(const Parameter<Real>* p) const;

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// Names per group, in registration order. Empty groups are present.
  std::map<ParamGroup, std::vector<std::string>> census() const;
  std::size_t scalar_count() const;

  Snapshot snapshot() const;
  void restore(const Snapshot& snapshot);

 private:
  std::deque<Parameter<Real>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename Real>
class Tape;

/// Handle to a value recorded on a tape. Invalidated by Tape::reset().
template <typename Real>
class Var {
 public:
  Var() = default;

  Tape<Real>& tape() const;
  const Matrix<Real>& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<Real>;
  Var(Tape<Real>* tape, std::uint32_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape<Real>* tape_ = nullptr;
  std::uint32_t id_ = 0;
  std::uint64_t generation_ = 0;
};

/// Reverse-mode computation tape. Nodes are appended in execution order, so
/// the record is topologically sorted; backward() replays it once in reverse.
/// Every primitive checks its output and throws NumericError on NaN/Inf.
///
/// Binary elementwise primitives broadcast a dimension of size 1 against the
/// other operand (2-D only).
template <typename Real>
class Tape {
 public:
  using Mat = Matrix<Real>;
  using V = Var<Real>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  V constant(Mat value);
  /// A leaf that receives a gradient (read it back with grad()).
  V variable(Mat value);
  /// Leaf bound to a parameter; repeated calls return the same node. After
  /// backward() the node gradient is added into p.grad.
  V param(Parameter<Real>& p);

  /// Reverse sweep from a 1x1 loss. Throws std::logic_error if called twice
  /// without reset(), std::invalid_argument for a non-scalar loss.
  void backward(V loss);
  /// Gradient of the last backward() w.r.t. v (zeros if v was not reached).
  Mat grad(V v) const;

  /// Drops all nodes; outstanding Vars become invalid.
  void reset();
  std::size_t size() const { return nodes_.size(); }

  bool training() const { return training_; }
  void set_training(bool training) { training_ = training; }

  /// Records a pipeline stage marker (used to audit control flow).
  void mark(std::string stage) { stages_.push_back(std::move(stage)); }
  const std::vector<std::string>& stages() const { return stages_; }
  /// Parameters bound via param() since the last reset.
  std::vector<const Parameter<Real>*> parameters() const;
  /// Operation names in record order.
  std::vector<std::string_view> ops() const;

  const Mat& value(V v) const;

  // Primitives.
  V matmul(V a, V b);
  V spmm(const SparseMatrix<Real>& a, V x);
  /// Sparse product where the matrix values are themselves a tape value
  /// (nnz x 1, ordered as the pattern).
  V spmm_values(const SparsityPattern::Ptr& pattern, V values, V x);
  V add(V a, V b);
  V sub(V a, V b);
  V mul(V a, V b);
  V div(V a, V b);
  V scale(V a, Real s);
  V add_scalar(V a, Real s);
  V sigmoid(V a);
  V softplus(V a);
  V log(V a);
  V exp(V a);
  V relu(V a);
  V leaky_relu(V a, Real slope);
  V maximum(V a, V b);
  V l2_normalize(V a);
  V concat(std::span<const V> parts);
  V slice_cols(V a, std::size_t begin, std::size_t end);
  /// Vertical stack of parts with equal column counts.
  V concat_rows(std::span<const V> parts);
  V slice_rows(V a, std::size_t begin, std::size_t end);
  V row_gather(V a, std::span<const std::uint32_t> rows);
  /// out.row(rows[r]) += a.row(r); the adjoint of row_gather.
  V scatter_rows(V a, std::span<const std::uint32_t> rows, std::size_t out_rows);
  /// Inverted dropout; identity when p == 0 or the tape is not training.
  V dropout(V a, Real p, Rng& rng);
  V sum(V a);
  V mean(V a);
  V row_sum(V a);
  V row_dot(V a, V b);
  V cosine(V a, V b);
  /// Row-wise softmax; entries with mask == false get probability 0.
  V softmax(V a, std::span<const bool> mask = {});
  V stop_gradient(V a);
  /// Values of D_r^-1/2 A D_c^-1/2 for A = (pattern, values), values >= 0.
  V sym_normalize_values(const SparsityPattern::Ptr& pattern, V values);
  /// Values of the row-stochastic version of (pattern, values), values >= 0.
  V row_normalize_values(const SparsityPattern::Ptr& pattern, V values);

 private:
  using Backward = std::function<void(Tape&, std::uint32_t)>;
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Parameter<Real>* param = nullptr;
    const char* op = "";
    Backward backward;
  };

  V push(const char* op, Mat value, bool requires_grad, Backward backward);
  const Node& node(V v) const;
  bool needs(V v) const { return node(v).requires_grad; }
  Mat& grad_buffer(std::uint32_t id);
  void accumulate(std::uint32_t id, const Mat& contribution);
  const Mat& val(std::uint32_t id) const { return nodes_[id].value; }
  const Mat& out_grad(std::uint32_t id) const { return nodes_[id].grad; }

  V unary(const char* op, V a, const std::function<Real(Real)>& f,
          const std::function<Real(Real, Real)>& df);
  V broadcast_binary(const char* op, V a, V b, const std::function<Real(Real, Real)>& f,
                     const std::function<Real(Real, Real)>& da,
                     const std::function<Real(Real, Real)>& db);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, std::uint32_t> param_nodes_;
  std::vector<std::string> stages_;
  std::uint64_t generation_ = 1;
  bool replayed_ = false;
  bool training_ = true;
};

template <typename Real>
Tape<Real>& Var<Real>::tape() const {
  if (tape_ == nullptr) throw std::logic_error("var: not bound to a tape");
  return *tape_;
}

template <typename Real>
const Matrix<Real>& Var<Real>::value() const {
  return tape().value(*this);
}

}  // namespace mmrec
