#include "common.hpp"

namespace mmrec {

using detail::param_name;

template <typename Real>
Freedom<Real>::Freedom(const ModelConfig& config, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(declared_pipeline(ModelKind::kFreedom, context.modalities(), config.dim),
                  context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)),
      edges_(context.train),
      full_adjacency_(sym_normalize(bipartite_adjacency<Real>(context.n_users, context.n_items, edges_))),
      pruned_edges_(edges_),
      prune_ratio_(config.prune_ratio),
      mm_weight_(static_cast<Real>(config.mm_loss_weight)),
      backbone_layers_(config.backbone_layers),
      item_layers_(config.effective_layers()) {
  const auto k = static_cast<std::size_t>(config.knn);
  if (k >= context.n_items) {
    throw std::invalid_argument("freedom: knn = " + std::to_string(k) + " needs more than " +
                                std::to_string(k) + " items, got " + std::to_string(context.n_items));
  }
  pruned_adjacency_ = full_adjacency_;
  // Frozen item-item graph: mean of the per-modality kNN affinities.
  const auto weight = Real{1} / static_cast<Real>(features_.size());
  item_graph_ = SparseMatrix<Real>(context.n_items, context.n_items);
  for (const auto& f : features_.matrices) {
    item_graph_ = sparse_add(item_graph_, knn_affinity(f, k), Real{1}, weight);
  }
  Rng rng(seed);
  const auto d = config.dim;
  auto& params = this->params_;
  params.add("user", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_users, d, rng));
  params.add("item", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_items, d, rng));
  for (std::size_t m = 0; m < features_.size(); ++m) {
    params.add(param_name("proj", features_.modalities[m]), ParamGroup::kRepresentation,
               xavier_uniform<Real>(features_.matrices[m].cols(), d, rng));
  }
}

template <typename Real>
void Freedom<Real>::begin_epoch(Rng& rng) {
  pruned_edges_ = degree_sensitive_prune(edges_, this->n_users_, this->n_items_, prune_ratio_, rng);
  pruned_adjacency_ = sym_normalize(bipartite_adjacency<Real>(this->n_users_, this->n_items_, pruned_edges_));
}

template <typename Real>
Var<Real> Freedom<Real>::forward(Tape<Real>& tape, const SparseMatrix<Real>& adjacency) {
  auto& params = this->params_;
  const auto users = this->n_users_;
  const auto item = tape.param(params.get("item"));
  const std::vector<V> stacked{tape.param(params.get("user")), item};
  const auto z = light_propagate(tape, adjacency, tape.concat_rows(stacked), backbone_layers_);
  V h = item;
  for (int l = 0; l < item_layers_; ++l) h = tape.spmm(item_graph_, h);
  const std::vector<V> parts{tape.slice_rows(z, 0, users),
                             tape.add(tape.slice_rows(z, users, users + this->n_items_), h)};
  return tape.concat_rows(parts);
}

template <typename Real>
Var<Real> Freedom<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  (void)rng;
  auto& params = this->params_;
  const detail::BatchIndex b(batch);
  tape.mark(std::string(stage::kExtract));
  const auto z = forward(tape, pruned_adjacency_);
  const auto u = tape.row_gather(z, b.users);
  const auto pos = Stages<Real>::predict(tape, u, tape.row_gather(z, detail::shifted(b.pos, this->n_users_)));
  const auto neg = Stages<Real>::predict(tape, u, tape.row_gather(z, detail::shifted(b.neg, this->n_users_)));
  const auto collaborative = bpr_loss(tape, pos, neg);
  std::vector<V> modal;
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto proj = tape.param(params.get(param_name("proj", features_.modalities[k])));
    const auto p_pos = Stages<Real>::coordinate_represent(
        tape, tape.constant(gather_rows(features_.matrices[k], b.pos)), proj);
    const auto p_neg = Stages<Real>::coordinate_represent(
        tape, tape.constant(gather_rows(features_.matrices[k], b.neg)), proj);
    modal.push_back(bpr_loss(tape, Stages<Real>::predict(tape, u, p_pos), Stages<Real>::predict(tape, u, p_neg)));
  }
  const auto multimodal = Stages<Real>::late_fuse(tape, modal, LateOp::kSum);
  return tape.add(collaborative, tape.scale(multimodal, mm_weight_));
}

template <typename Real>
Matrix<Real> Freedom<Real>::score(std::span<const std::uint32_t> users) {
  const auto z = detail::evaluate<Real>([&](Tape<Real>& t) { return forward(t, full_adjacency_); });
  std::vector<std::uint32_t> items(this->n_items_);
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = static_cast<std::uint32_t>(this->n_users_ + i);
  return matmul_transposed(gather_rows(z, users), gather_rows(z, items));
}

template class Freedom<float>;
template class Freedom<double>;

}  // namespace mmrec
