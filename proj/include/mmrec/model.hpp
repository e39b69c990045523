#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmrec/autograd.hpp"
#include "mmrec/dataset.hpp"
#include "mmrec/modality.hpp"
#include "mmrec/schema.hpp"
#include "mmrec/training.hpp"

namespace mmrec {

enum class ModelKind { kVbpr, kMmgcn, kGrcn, kLattice, kBm3, kFreedom };

inline constexpr std::array<ModelKind, 6> kAllModels{ModelKind::kVbpr,    ModelKind::kMmgcn,
                                                    ModelKind::kGrcn,    ModelKind::kLattice,
                                                    ModelKind::kBm3,     ModelKind::kFreedom};

std::string_view to_string(ModelKind kind);
/// Lower-case tag ("vbpr", ...). Throws std::invalid_argument for unknown tags.
ModelKind parse_model_kind(std::string_view tag);
/// Display name used in reports ("VBPR", ...).
std::string_view display_name(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::kVbpr;
  std::size_t dim = 64;
  /// Graph layers: user-item layers for MMGCN/GRCN, item-item layers for
  /// LATTICE/FREEDOM. Negative selects the model default (2 or 1).
  int layers = -1;
  /// User-item propagation layers of the BM3/FREEDOM backbone.
  int backbone_layers = 2;
  std::size_t knn = 10;
  double lattice_lambda = 0.5;
  double dropout = 0.5;
  double prune_ratio = 0.8;
  double mm_loss_weight = 0.1;
  double align_weight = 1.0;
  bool vbpr_bias = false;
  /// MMGCN combination nonlinearity: leaky (slope 0.01) or linear.
  bool mmgcn_leaky = true;
  bool mmgcn_id_embeddings = true;

  int effective_layers() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Training data a model is built against.
struct ModelContext {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<UserItem> train;
  /// Resolved n_items x d_m feature matrix per modality.
  std::vector<std::pair<Modality, Matrix<float>>> features;

  static ModelContext from(const Split& split, const MultimodalStore& store);
  std::vector<Modality> modalities() const;
};

/// A recommender expressed as a pipeline instance. The pipeline is checked
/// with validate() on construction.
template <typename Real>
class Model {
 public:
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual std::string_view name() const = 0;
  const PipelineSpec& pipeline() const { return pipeline_; }
  ParameterSet<Real>& parameters() { return params_; }
  const ParameterSet<Real>& parameters() const { return params_; }
  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }

  /// Called once per epoch before any batch (graph resampling etc.).
  virtual void begin_epoch(Rng& rng) { (void)rng; }
  /// Objective of one batch, without the regularizer.
  virtual Var<Real> loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) = 0;
  /// Scores of every item for each user (rows follow `users`).
  virtual Matrix<Real> score(std::span<const std::uint32_t> users) = 0;
  /// False for objectives that ignore the sampled negatives.
  virtual bool uses_negatives() const { return true; }

 protected:
  Model(PipelineSpec pipeline, std::size_t n_users, std::size_t n_items)
      : pipeline_(std::move(pipeline)), n_users_(n_users), n_items_(n_items) {
    validate(pipeline_);
  }

  PipelineSpec pipeline_;
  ParameterSet<Real> params_;
  std::size_t n_users_;
  std::size_t n_items_;
};

/// Builds the model named by config.kind. Parameter initialization is a
/// deterministic function of `seed`.
template <typename Real>
std::unique_ptr<Model<Real>> make_model(const ModelConfig& config, const ModelContext& context,
                                        std::uint64_t seed);

/// Declared (representation, fusion) classification of each model.
PipelineSpec declared_pipeline(ModelKind kind, const std::vector<Modality>& modalities,
                               std::size_t dim);

/// Parameters never bound on the tape of one loss evaluation: should be
/// empty for every model ("no orphans").
template <typename Real>
std::vector<std::string> orphan_parameters(Model<Real>& model, std::span<const Triple> batch,
                                           std::uint64_t seed);

/// Checkpoint = manifest.json (model tag, config, parameter names, groups,
/// shapes) + one little-endian f32 blob per parameter.
void save_checkpoint(const Model<float>& model, const ModelConfig& config,
                     const std::filesystem::path& dir);
/// Loads values into a model with the same parameter layout.
void load_checkpoint(Model<float>& model, const std::filesystem::path& dir);

}  // namespace mmrec
