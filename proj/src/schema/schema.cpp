#include "mmrec/schema.hpp"

#include <algorithm>
#include <cmath>

namespace mmrec {

std::string_view to_string(Representation r) {
  return r == Representation::kJoint ? "joint" : "coordinate";
}

std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::kNone: return "none";
    case Fusion::kEarly: return "early";
    case Fusion::kLate: return "late";
  }
  return "unknown";
}

std::string_view to_string(EarlyOp op) {
  switch (op) {
    case EarlyOp::kConcat: return "concat";
    case EarlyOp::kSum: return "sum";
    case EarlyOp::kMean: return "mean";
    case EarlyOp::kWeightedSum: return "weighted_sum";
  }
  return "unknown";
}

std::string_view to_string(LateOp op) {
  switch (op) {
    case LateOp::kSum: return "sum";
    case LateOp::kMean: return "mean";
    case LateOp::kMax: return "max";
    case LateOp::kWeightedSum: return "weighted_sum";
  }
  return "unknown";
}

std::string PipelineSpec::describe() const {
  std::string out(to_string(representation));
  out += "+";
  out += to_string(fusion);
  if (fusion == Fusion::kEarly) out += "(" + std::string(to_string(early_op)) + ")";
  if (fusion == Fusion::kLate) out += "(" + std::string(to_string(late_op)) + ")";
  return out;
}

void validate(const PipelineSpec& spec) {
  if (spec.representation == Representation::kJoint && spec.fusion != Fusion::kNone) {
    throw SchemaError("joint representation excludes fusion");
  }
  if (spec.representation == Representation::kCoordinate && spec.fusion == Fusion::kNone) {
    throw SchemaError("coordinate representation requires fusion");
  }
  if (spec.dim < 1) throw SchemaError("representation dimension must be positive");
  for (std::size_t i = 0; i < spec.modalities.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (spec.modalities[i] == spec.modalities[j]) {
        throw SchemaError("modality '" + std::string(to_string(spec.modalities[i])) +
                          "' listed twice");
      }
    }
  }
  if (!spec.constraints.empty() && spec.representation != Representation::kCoordinate) {
    throw SchemaError("alignment constraints require a coordinate representation");
  }
  auto configured = [&](Modality m) {
    return std::find(spec.modalities.begin(), spec.modalities.end(), m) != spec.modalities.end();
  };
  for (const auto& c : spec.constraints) {
    if (!configured(c.first) || !configured(c.second)) {
      throw SchemaError("constraint references an unconfigured modality");
    }
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      throw SchemaError("constraint weight must be finite and non-negative");
    }
  }
}

template <typename Real>
Real predict_inner(std::span<const Real> user, std::span<const Real> item) {
  if (user.size() != item.size()) {
    throw ShapeError("predict_inner: dimension mismatch " + std::to_string(user.size()) + " vs " +
                     std::to_string(item.size()));
  }
  const Real s = dot<Real>(user, item);
  if (!std::isfinite(s)) throw NumericError("predict_inner: non-finite score");
  return s;
}

template float predict_inner(std::span<const float>, std::span<const float>);
template double predict_inner(std::span<const double>, std::span<const double>);

namespace {

template <typename Real>
Var<Real> fusion_weights(Tape<Real>& tape, Var<Real> logits, std::size_t count,
                         std::span<const bool> mask) {
  if (!logits.valid()) throw SchemaError("weighted_sum fusion needs weight logits");
  if (logits.rows() != 1 || logits.cols() != count) {
    throw ShapeError("fusion logits must be 1x" + std::to_string(count));
  }
  return tape.softmax(logits, mask);
}

template <typename Real>
Var<Real> weighted(Tape<Real>& tape, std::span<const Var<Real>> parts, Var<Real> weights) {
  Var<Real> out;
  for (std::size_t m = 0; m < parts.size(); ++m) {
    const auto term = tape.mul(parts[m], tape.slice_cols(weights, m, m + 1));
    out = out.valid() ? tape.add(out, term) : term;
  }
  return out;
}

}  // namespace

template <typename Real>
Var<Real> Stages<Real>::joint_represent(Tape<Real>& tape, std::span<const V> features,
                                        V projection) {
  tape.mark(std::string(stage::kJointRepresent));
  if (features.empty()) throw SchemaError("joint representation needs at least one modality");
  const auto fused_input = features.size() == 1 ? features[0] : tape.concat(features);
  if (fused_input.cols() != projection.rows()) {
    throw ShapeError("joint projection expects " + std::to_string(projection.rows()) +
                     " input columns, got " + std::to_string(fused_input.cols()));
  }
  return tape.matmul(fused_input, projection);
}

template <typename Real>
Var<Real> Stages<Real>::coordinate_represent(Tape<Real>& tape, V feature, V projection) {
  tape.mark(std::string(stage::kCoordinateRepresent));
  if (feature.cols() != projection.rows()) {
    throw ShapeError("coordinate projection expects " + std::to_string(projection.rows()) +
                     " input columns, got " + std::to_string(feature.cols()));
  }
  return tape.matmul(feature, projection);
}

template <typename Real>
Var<Real> Stages<Real>::alignment_penalty(Tape<Real>& tape, V a, V b, double weight) {
  const auto one_minus = tape.add_scalar(tape.scale(tape.cosine(a, b), Real{-1}), Real{1});
  return tape.scale(tape.mean(one_minus), static_cast<Real>(weight));
}

template <typename Real>
Var<Real> Stages<Real>::early_fuse(Tape<Real>& tape, std::span<const V> reps, EarlyOp op,
                                   V logits, std::span<const bool> mask) {
  tape.mark(std::string(stage::kEarlyFuse));
  if (reps.empty()) throw SchemaError("early fusion needs at least one representation");
  if (op == EarlyOp::kConcat) return reps.size() == 1 ? reps[0] : tape.concat(reps);
  for (const auto& r : reps) {
    if (!r.value().same_shape(reps[0].value())) {
      throw ShapeError("early fusion: representation shapes differ");
    }
  }
  switch (op) {
    case EarlyOp::kSum:
    case EarlyOp::kMean: {
      V out = reps[0];
      for (std::size_t m = 1; m < reps.size(); ++m) out = tape.add(out, reps[m]);
      if (op == EarlyOp::kMean && reps.size() > 1) {
        out = tape.scale(out, Real{1} / static_cast<Real>(reps.size()));
      }
      return out;
    }
    case EarlyOp::kWeightedSum:
      return weighted(tape, reps, fusion_weights(tape, logits, reps.size(), mask));
    case EarlyOp::kConcat: break;
  }
  throw SchemaError("unknown early fusion operator");
}

template <typename Real>
Var<Real> Stages<Real>::late_fuse(Tape<Real>& tape, std::span<const V> predictions, LateOp op,
                                  V logits, std::span<const bool> mask) {
  tape.mark(std::string(stage::kLateFuse));
  if (predictions.empty()) throw SchemaError("late fusion needs at least one prediction");
  for (const auto& p : predictions) {
    if (p.cols() != 1 || p.rows() != predictions[0].rows()) {
      throw ShapeError("late fusion: predictions must be n x 1 columns of equal length");
    }
  }
  switch (op) {
    case LateOp::kSum:
    case LateOp::kMean: {
      V out = predictions[0];
      for (std::size_t m = 1; m < predictions.size(); ++m) out = tape.add(out, predictions[m]);
      if (op == LateOp::kMean && predictions.size() > 1) {
        out = tape.scale(out, Real{1} / static_cast<Real>(predictions.size()));
      }
      return out;
    }
    case LateOp::kMax: {
      V out = predictions[0];
      for (std::size_t m = 1; m < predictions.size(); ++m) out = tape.maximum(out, predictions[m]);
      return out;
    }
    case LateOp::kWeightedSum:
      return weighted(tape, predictions, fusion_weights(tape, logits, predictions.size(), mask));
  }
  throw SchemaError("unknown late fusion operator");
}

template <typename Real>
Var<Real> Stages<Real>::predict(Tape<Real>& tape, V users, V items) {
  tape.mark(std::string(stage::kPredict));
  return tape.row_dot(users, items);
}

template struct Stages<float>;
template struct Stages<double>;

}  // namespace mmrec
