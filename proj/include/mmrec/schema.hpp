#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmrec/autograd.hpp"
#include "mmrec/modality.hpp"

namespace mmrec {

/// An illegal pipeline configuration.
class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Representation { kJoint, kCoordinate };
enum class Fusion { kNone, kEarly, kLate };
enum class EarlyOp { kConcat, kSum, kMean, kWeightedSum };
enum class LateOp { kSum, kMean, kMax, kWeightedSum };

std::string_view to_string(Representation r);
std::string_view to_string(Fusion f);
std::string_view to_string(EarlyOp op);
std::string_view to_string(LateOp op);

/// Cosine alignment between two modalities' coordinate representations,
/// contributing weight * (1 - cos) to the loss.
struct AlignmentConstraint {
  Modality first;
  Modality second;
  double weight = 1.0;

  bool operator==(const AlignmentConstraint&) const = default;
};

struct PipelineSpec {
  Representation representation = Representation::kJoint;
  Fusion fusion = Fusion::kNone;
  EarlyOp early_op = EarlyOp::kSum;
  LateOp late_op = LateOp::kSum;
  std::vector<AlignmentConstraint> constraints;
  std::vector<Modality> modalities;
  std::size_t dim = 64;

  /// e.g. "coordinate+early(concat)".
  std::string describe() const;
  bool operator==(const PipelineSpec&) const = default;
};

/// Accepts (joint, none), (coordinate, early) and (coordinate, late). Also
/// checks the modality list and constraints. Throws SchemaError.
void validate(const PipelineSpec& spec);

/// Inner-product predictor.
template <typename Real>
Real predict_inner(std::span<const Real> user, std::span<const Real> item);

/// Tape-level stages of the pipeline. Each records a stage marker on the
/// tape so the executed branch can be audited.
template <typename Real>
struct Stages {
  using V = Var<Real>;

  /// concat(features) * projection.
  static V joint_represent(Tape<Real>& tape, std::span<const V> features, V projection);
  /// feature * projection.
  static V coordinate_represent(Tape<Real>& tape, V feature, V projection);
  /// mean over rows of 1 - cos(a_r, b_r), times weight (a 1x1 value).
  static V alignment_penalty(Tape<Real>& tape, V a, V b, double weight);
  /// Combines n x d_m representations. weighted_sum takes 1 x M logits,
  /// passed through a softmax; `mask` pins entries to weight 0.
  static V early_fuse(Tape<Real>& tape, std::span<const V> reps, EarlyOp op, V logits = {},
                      std::span<const bool> mask = {});
  /// Combines n x 1 per-modality predictions.
  static V late_fuse(Tape<Real>& tape, std::span<const V> predictions, LateOp op, V logits = {},
                     std::span<const bool> mask = {});
  /// Row-wise inner product of n x d user and item representations.
  static V predict(Tape<Real>& tape, V users, V items);
};

/// Stage marker names.
namespace stage {
inline constexpr std::string_view kExtract = "extract";
inline constexpr std::string_view kJointRepresent = "joint_represent";
inline constexpr std::string_view kCoordinateRepresent = "coordinate_represent";
inline constexpr std::string_view kEarlyFuse = "early_fuse";
inline constexpr std::string_view kLateFuse = "late_fuse";
inline constexpr std::string_view kPredict = "predict";
}  // namespace stage

}  // namespace mmrec
