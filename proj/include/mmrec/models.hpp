#pragma once

// Concrete recommenders. Parameter names are stable: they key checkpoints
// and the group census.

#include <optional>

#include "mmrec/graph.hpp"
#include "mmrec/model.hpp"

namespace mmrec {

/// Dense per-modality item features in the model's precision.
template <typename Real>
struct FeatureSet {
  std::vector<Modality> modalities;
  std::vector<Matrix<Real>> matrices;

  static FeatureSet from(const ModelContext& context);
  std::size_t size() const { return modalities.size(); }
};

/// Generic model that follows the pipeline branches literally:
/// joint -> represent -> predict; coordinate+early -> represent -> fuse ->
/// predict; coordinate+late -> represent -> predict per modality -> fuse.
/// The user side is a free embedding (one per modality under late fusion).
template <typename Real>
class SchemaModel : public Model<Real> {
 public:
  using V = Var<Real>;
  SchemaModel(PipelineSpec spec, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "schema"; }
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;

  /// n x 1 scores of (users[r], items[r]).
  V batch_scores(Tape<Real>& tape, std::span<const std::uint32_t> users,
                 std::span<const std::uint32_t> items);
  /// Sum of weighted alignment penalties over `items` (zero without constraints).
  V constraint_penalty(Tape<Real>& tape, std::span<const std::uint32_t> items);

 private:
  std::vector<V> represent(Tape<Real>& tape, std::span<const std::uint32_t> items);
  FeatureSet<Real> features_;
};

template <typename Real>
class Vbpr : public Model<Real> {
 public:
  using V = Var<Real>;
  Vbpr(const ModelConfig& config, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "vbpr"; }
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;
  V batch_scores(Tape<Real>& tape, std::span<const std::uint32_t> users,
                 std::span<const std::uint32_t> items);

 private:
  FeatureSet<Real> features_;
  bool bias_;
};

template <typename Real>
class Mmgcn : public Model<Real> {
 public:
  using V = Var<Real>;
  Mmgcn(const ModelConfig& config, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "mmgcn"; }
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;
  /// Fused (U + I) x d node representations.
  V forward(Tape<Real>& tape);
  /// Representations of one modality before fusion.
  V modality_forward(Tape<Real>& tape, std::size_t m);
  const SparseMatrix<Real>& adjacency() const { return adjacency_; }

 private:
  FeatureSet<Real> features_;
  SparseMatrix<Real> adjacency_;
  int layers_;
  bool leaky_;
  bool id_embeddings_;
};

template <typename Real>
class Grcn : public Model<Real> {
 public:
  using V = Var<Real>;
  Grcn(const ModelConfig& config, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "grcn"; }
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;
  /// (U + I) x d(1 + M) node representations.
  V forward(Tape<Real>& tape);
  /// Per-edge gate (|E| x 1): max over modalities of relu(cos(pref_u, item_i)).
  V edge_gate(Tape<Real>& tape);
  /// Symmetrically normalized adjacency values for per-edge gates.
  V refine(Tape<Real>& tape, V gate) const;
  const SparsityPattern::Ptr& pattern() const { return pattern_; }
  /// Users whose edges are all gated to zero at the current parameters.
  std::size_t fully_pruned_users();

 private:
  FeatureSet<Real> features_;
  std::vector<UserItem> edges_;
  SparsityPattern::Ptr pattern_;
  std::vector<std::uint32_t> entry_edges_;
  std::vector<std::uint32_t> edge_users_;
  std::vector<std::uint32_t> edge_items_;
  int layers_;
};

template <typename Real>
class Lattice : public Model<Real> {
 public:
  using V = Var<Real>;
  Lattice(const ModelConfig& config, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "lattice"; }
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;

  struct ItemGraph {
    SparsityPattern::Ptr pattern;
    V values;  // nnz x 1
  };
  /// Blended, modality-merged item-item graph at the current parameters.
  /// `mask` pins modality weights to zero (used to isolate a modality).
  ItemGraph item_graph(Tape<Real>& tape, std::span<const bool> mask = {});
  /// Item representations: id embedding + l2_normalize(propagated).
  V item_forward(Tape<Real>& tape);
  const SparseMatrix<Real>& initial_graph(std::size_t m) const { return initial_.at(m); }

 private:
  FeatureSet<Real> features_;
  std::vector<SparseMatrix<Real>> initial_;
  std::size_t knn_;
  double lambda_;
  int layers_;
};

template <typename Real>
class Bm3 : public Model<Real> {
 public:
  using V = Var<Real>;
  Bm3(const ModelConfig& config, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "bm3"; }
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;
  bool uses_negatives() const override { return false; }

  struct Losses {
    V reconstruction;
    V inter;  // summed over modalities
    V intra;  // summed over modalities
  };
  Losses losses(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng);

  /// Stop-gradient targets are live by default. kRecord keeps the values of
  /// the next losses() call; kReplay substitutes them as constants, so finite
  /// differences see the same fixed targets the tape gradient assumes.
  enum class TargetMode { kLive, kRecord, kReplay };
  void set_target_mode(TargetMode mode) { target_mode_ = mode; }

 private:
  V backbone(Tape<Real>& tape);
  TargetMode target_mode_ = TargetMode::kLive;
  std::vector<Matrix<Real>> recorded_targets_;
  FeatureSet<Real> features_;
  SparseMatrix<Real> adjacency_;
  int layers_;
  Real dropout_;
  Real align_weight_;
};

template <typename Real>
class Freedom : public Model<Real> {
 public:
  using V = Var<Real>;
  Freedom(const ModelConfig& config, const ModelContext& context, std::uint64_t seed);

  std::string_view name() const override { return "freedom"; }
  void begin_epoch(Rng& rng) override;
  V loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) override;
  Matrix<Real> score(std::span<const std::uint32_t> users) override;

  /// The user-item edges kept for the current epoch.
  const std::vector<UserItem>& pruned_edges() const { return pruned_edges_; }
  const SparseMatrix<Real>& item_graph() const { return item_graph_; }

 private:
  /// (U + I) x d representations propagated over `adjacency`.
  V forward(Tape<Real>& tape, const SparseMatrix<Real>& adjacency);
  FeatureSet<Real> features_;
  std::vector<UserItem> edges_;
  SparseMatrix<Real> full_adjacency_;
  SparseMatrix<Real> pruned_adjacency_;
  std::vector<UserItem> pruned_edges_;
  SparseMatrix<Real> item_graph_;
  double prune_ratio_;
  Real mm_weight_;
  int backbone_layers_;
  int item_layers_;
};

}  // namespace mmrec
