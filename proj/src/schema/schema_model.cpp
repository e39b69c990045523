#include <numeric>

#include "../models/common.hpp"
#include "mmrec/models.hpp"
#include "mmrec/training.hpp"

namespace mmrec {

using detail::param_name;

template <typename Real>
SchemaModel<Real>::SchemaModel(PipelineSpec spec, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(std::move(spec), context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)) {
  const auto& p = this->pipeline_;
  if (p.modalities != features_.modalities) {
    throw SchemaError("pipeline modalities differ from the loaded features");
  }
  if (features_.size() == 0) throw SchemaError("pipeline needs at least one modality");
  Rng rng(seed);
  const auto d = p.dim;
  const auto n_users = context.n_users;
  auto& params = this->params_;
  if (p.representation == Representation::kJoint) {
    std::size_t in = 0;
    for (const auto& f : features_.matrices) in += f.cols();
    params.add("user", ParamGroup::kPredictor, xavier_uniform<Real>(n_users, d, rng));
    params.add("proj", ParamGroup::kRepresentation, xavier_uniform<Real>(in, d, rng));
    return;
  }
  const auto m_count = features_.size();
  if (p.fusion == Fusion::kEarly) {
    const auto user_dim = p.early_op == EarlyOp::kConcat ? d * m_count : d;
    params.add("user", ParamGroup::kPredictor, xavier_uniform<Real>(n_users, user_dim, rng));
  } else {
    for (auto m : features_.modalities) {
      params.add(param_name("user", m), ParamGroup::kPredictor, xavier_uniform<Real>(n_users, d, rng));
    }
  }
  for (std::size_t k = 0; k < m_count; ++k) {
    params.add(param_name("proj", features_.modalities[k]), ParamGroup::kRepresentation,
               xavier_uniform<Real>(features_.matrices[k].cols(), d, rng));
  }
  const bool weighted = (p.fusion == Fusion::kEarly && p.early_op == EarlyOp::kWeightedSum) ||
                        (p.fusion == Fusion::kLate && p.late_op == LateOp::kWeightedSum);
  if (weighted) params.add("fusion_logits", ParamGroup::kFusion, Matrix<Real>(1, m_count));
}

template <typename Real>
std::vector<Var<Real>> SchemaModel<Real>::represent(Tape<Real>& tape,
                                                    std::span<const std::uint32_t> items) {
  tape.mark(std::string(stage::kExtract));
  std::vector<V> feats;
  for (const auto& f : features_.matrices) feats.push_back(tape.constant(gather_rows(f, items)));
  auto& params = this->params_;
  if (this->pipeline_.representation == Representation::kJoint) {
    return {Stages<Real>::joint_represent(tape, feats, tape.param(params.get("proj")))};
  }
  std::vector<V> reps;
  for (std::size_t k = 0; k < feats.size(); ++k) {
    const auto proj = tape.param(params.get(param_name("proj", features_.modalities[k])));
    reps.push_back(Stages<Real>::coordinate_represent(tape, feats[k], proj));
  }
  return reps;
}

template <typename Real>
Var<Real> SchemaModel<Real>::batch_scores(Tape<Real>& tape, std::span<const std::uint32_t> users,
                                          std::span<const std::uint32_t> items) {
  const auto& p = this->pipeline_;
  auto& params = this->params_;
  const auto reps = represent(tape, items);
  V logits;
  if (params.contains("fusion_logits")) logits = tape.param(params.get("fusion_logits"));
  if (p.representation == Representation::kJoint) {
    const auto u = tape.row_gather(tape.param(params.get("user")), users);
    return Stages<Real>::predict(tape, u, reps[0]);
  }
  if (p.fusion == Fusion::kEarly) {
    const auto fused = Stages<Real>::early_fuse(tape, reps, p.early_op, logits);
    const auto u = tape.row_gather(tape.param(params.get("user")), users);
    return Stages<Real>::predict(tape, u, fused);
  }
  std::vector<V> predictions;
  for (std::size_t k = 0; k < reps.size(); ++k) {
    const auto u = tape.row_gather(tape.param(params.get(param_name("user", features_.modalities[k]))), users);
    predictions.push_back(Stages<Real>::predict(tape, u, reps[k]));
  }
  return Stages<Real>::late_fuse(tape, predictions, p.late_op, logits);
}

template <typename Real>
Var<Real> SchemaModel<Real>::constraint_penalty(Tape<Real>& tape,
                                                std::span<const std::uint32_t> items) {
  const auto& p = this->pipeline_;
  V total = tape.constant(Matrix<Real>(1, 1));
  if (p.constraints.empty()) return total;
  const auto reps = represent(tape, items);
  auto index = [&](Modality m) {
    for (std::size_t k = 0; k < features_.size(); ++k)
      if (features_.modalities[k] == m) return k;
    throw SchemaError("constraint references an unconfigured modality");
  };
  for (const auto& c : p.constraints) {
    total = tape.add(total, Stages<Real>::alignment_penalty(tape, reps[index(c.first)],
                                                            reps[index(c.second)], c.weight));
  }
  return total;
}

template <typename Real>
Var<Real> SchemaModel<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  (void)rng;
  const detail::BatchIndex b(batch);
  const auto pos = batch_scores(tape, b.users, b.pos);
  const auto neg = batch_scores(tape, b.users, b.neg);
  auto total = bpr_loss(tape, pos, neg);
  if (!this->pipeline_.constraints.empty()) total = tape.add(total, constraint_penalty(tape, b.pos));
  return total;
}

template <typename Real>
Matrix<Real> SchemaModel<Real>::score(std::span<const std::uint32_t> users) {
  Matrix<Real> out(users.size(), this->n_items_);
  std::vector<std::uint32_t> items(this->n_items_);
  std::iota(items.begin(), items.end(), 0u);
  for (std::size_t r = 0; r < users.size(); ++r) {
    const std::vector<std::uint32_t> repeated(items.size(), users[r]);
    const auto s = detail::evaluate<Real>([&](Tape<Real>& t) { return batch_scores(t, repeated, items); });
    for (std::size_t i = 0; i < items.size(); ++i) out(r, i) = s(i, 0);
  }
  return out;
}

template class SchemaModel<float>;
template class SchemaModel<double>;

}  // namespace mmrec
