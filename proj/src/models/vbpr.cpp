#include "common.hpp"

namespace mmrec {

using detail::param_name;

template <typename Real>
Vbpr<Real>::Vbpr(const ModelConfig& config, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(declared_pipeline(ModelKind::kVbpr, context.modalities(), config.dim),
                  context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)),
      bias_(config.vbpr_bias) {
  Rng rng(seed);
  const auto d = config.dim;
  auto& params = this->params_;
  params.add("user", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_users, d, rng));
  params.add("item", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_items, d, rng));
  if (bias_) params.add("item_bias", ParamGroup::kPredictor, Matrix<Real>(context.n_items, 1));
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    params.add(param_name("user", m), ParamGroup::kPredictor,
               xavier_uniform<Real>(context.n_users, d, rng));
    params.add(param_name("proj", m), ParamGroup::kRepresentation,
               xavier_uniform<Real>(features_.matrices[k].cols(), d, rng));
  }
}

template <typename Real>
Var<Real> Vbpr<Real>::batch_scores(Tape<Real>& tape, std::span<const std::uint32_t> users,
                                   std::span<const std::uint32_t> items) {
  auto& params = this->params_;
  tape.mark(std::string(stage::kExtract));
  std::vector<V> predictions;
  // Collaborative term theta_u . theta_i (+ item bias).
  auto collaborative = Stages<Real>::predict(tape, tape.row_gather(tape.param(params.get("user")), users),
                                             tape.row_gather(tape.param(params.get("item")), items));
  if (bias_) {
    collaborative = tape.add(collaborative, tape.row_gather(tape.param(params.get("item_bias")), items));
  }
  predictions.push_back(collaborative);
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    const auto f = tape.constant(gather_rows(features_.matrices[k], items));
    const auto rep = Stages<Real>::coordinate_represent(tape, f, tape.param(params.get(param_name("proj", m))));
    const auto u = tape.row_gather(tape.param(params.get(param_name("user", m))), users);
    predictions.push_back(Stages<Real>::predict(tape, u, rep));
  }
  return Stages<Real>::late_fuse(tape, predictions, LateOp::kSum);
}

template <typename Real>
Var<Real> Vbpr<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  (void)rng;
  const detail::BatchIndex b(batch);
  return bpr_loss(tape, batch_scores(tape, b.users, b.pos), batch_scores(tape, b.users, b.neg));
}

template <typename Real>
Matrix<Real> Vbpr<Real>::score(std::span<const std::uint32_t> users) {
  const auto& params = this->params_;
  auto out = matmul_transposed(gather_rows(params.get("user").value, users), params.get("item").value);
  if (bias_) {
    const auto& b = params.get("item_bias").value;
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t i = 0; i < out.cols(); ++i) out(r, i) += b(i, 0);
  }
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    const auto items = matmul(features_.matrices[k], params.get(param_name("proj", m)).value);
    const auto part = matmul_transposed(gather_rows(params.get(param_name("user", m)).value, users), items);
    for (std::size_t j = 0; j < out.size(); ++j) out.values()[j] += part.values()[j];
  }
  return out;
}

template class Vbpr<float>;
template class Vbpr<double>;

}  // namespace mmrec
