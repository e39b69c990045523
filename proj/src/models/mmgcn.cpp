#include "common.hpp"

namespace mmrec {

using detail::param_name;

namespace {

std::string layer_name(const char* prefix, Modality m, int layer) {
  return param_name(prefix, m) + "." + std::to_string(layer);
}

}  // namespace

template <typename Real>
Mmgcn<Real>::Mmgcn(const ModelConfig& config, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(declared_pipeline(ModelKind::kMmgcn, context.modalities(), config.dim),
                  context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)),
      adjacency_(sym_normalize(bipartite_adjacency<Real>(context.n_users, context.n_items, context.train))),
      layers_(config.effective_layers()),
      leaky_(config.mmgcn_leaky),
      id_embeddings_(config.mmgcn_id_embeddings) {
  if (layers_ == 0 && !id_embeddings_) {
    throw std::invalid_argument("mmgcn: 0 layers without id embeddings leaves no representation");
  }
  Rng rng(seed);
  const auto d = config.dim;
  const auto nodes = context.n_users + context.n_items;
  auto& params = this->params_;
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    if (layers_ > 0) {
      params.add(param_name("user_pref", m), ParamGroup::kPredictor,
                 xavier_uniform<Real>(context.n_users, d, rng));
      params.add(param_name("proj", m), ParamGroup::kRepresentation,
                 xavier_uniform<Real>(features_.matrices[k].cols(), d, rng));
    }
    if (id_embeddings_) {
      params.add(param_name("id", m), ParamGroup::kPredictor, xavier_uniform<Real>(nodes, d, rng));
    }
    for (int l = 0; l < layers_; ++l) {
      params.add(layer_name("w_agg", m, l), ParamGroup::kRepresentation, xavier_uniform<Real>(d, d, rng));
      if (id_embeddings_) {
        params.add(layer_name("w_id", m, l), ParamGroup::kRepresentation, xavier_uniform<Real>(d, d, rng));
      }
    }
  }
}

template <typename Real>
Var<Real> Mmgcn<Real>::modality_forward(Tape<Real>& tape, std::size_t k) {
  auto& params = this->params_;
  const auto m = features_.modalities.at(k);
  V id;
  if (id_embeddings_) id = tape.param(params.get(param_name("id", m)));
  if (layers_ == 0) return id;
  tape.mark(std::string(stage::kExtract));
  const auto rep = Stages<Real>::coordinate_represent(
      tape, tape.constant(features_.matrices[k]), tape.param(params.get(param_name("proj", m))));
  const std::vector<V> stacked{tape.param(params.get(param_name("user_pref", m))), rep};
  V h = tape.concat_rows(stacked);
  V out = id;
  for (int l = 0; l < layers_; ++l) {
    auto combined = tape.add(tape.matmul(tape.spmm(adjacency_, h), tape.param(params.get(layer_name("w_agg", m, l)))), h);
    if (id_embeddings_) {
      combined = tape.add(combined, tape.matmul(id, tape.param(params.get(layer_name("w_id", m, l)))));
    }
    h = leaky_ ? tape.leaky_relu(combined, Real(0.01)) : combined;
    out = out.valid() ? tape.add(out, h) : h;
  }
  return out;
}

template <typename Real>
Var<Real> Mmgcn<Real>::forward(Tape<Real>& tape) {
  std::vector<V> reps;
  for (std::size_t k = 0; k < features_.size(); ++k) reps.push_back(modality_forward(tape, k));
  return Stages<Real>::early_fuse(tape, reps, EarlyOp::kSum);
}

template <typename Real>
Var<Real> Mmgcn<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  (void)rng;
  const detail::BatchIndex b(batch);
  const auto z = forward(tape);
  const auto u = tape.row_gather(z, b.users);
  const auto pos = Stages<Real>::predict(tape, u, tape.row_gather(z, detail::shifted(b.pos, this->n_users_)));
  const auto neg = Stages<Real>::predict(tape, u, tape.row_gather(z, detail::shifted(b.neg, this->n_users_)));
  return bpr_loss(tape, pos, neg);
}

template <typename Real>
Matrix<Real> Mmgcn<Real>::score(std::span<const std::uint32_t> users) {
  const auto z = detail::evaluate<Real>([&](Tape<Real>& t) { return forward(t); });
  std::vector<std::uint32_t> items(this->n_items_);
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = static_cast<std::uint32_t>(this->n_users_ + i);
  return matmul_transposed(gather_rows(z, users), gather_rows(z, items));
}

template class Mmgcn<float>;
template class Mmgcn<double>;

}  // namespace mmrec
