#include "common.hpp"

namespace mmrec {

using detail::param_name;

template <typename Real>
Lattice<Real>::Lattice(const ModelConfig& config, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(declared_pipeline(ModelKind::kLattice, context.modalities(), config.dim),
                  context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)),
      knn_(static_cast<std::size_t>(config.knn)),
      lambda_(config.lattice_lambda),
      layers_(config.effective_layers()) {
  if (knn_ >= context.n_items) {
    throw std::invalid_argument("lattice: knn = " + std::to_string(knn_) + " needs more than " +
                                std::to_string(knn_) + " items, got " + std::to_string(context.n_items));
  }
  for (const auto& f : features_.matrices) initial_.push_back(knn_affinity(f, knn_));
  Rng rng(seed);
  const auto d = config.dim;
  auto& params = this->params_;
  params.add("user", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_users, d, rng));
  params.add("item", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_items, d, rng));
  // With lambda = 1 the learned graph has no weight, so no projection exists.
  if (lambda_ < 1.0) {
    for (std::size_t k = 0; k < features_.size(); ++k) {
      params.add(param_name("proj", features_.modalities[k]), ParamGroup::kRepresentation,
                 xavier_uniform<Real>(features_.matrices[k].cols(), d, rng));
    }
  }
  params.add("fusion_logits", ParamGroup::kFusion, Matrix<Real>(1, features_.size()));
}

template <typename Real>
typename Lattice<Real>::ItemGraph Lattice<Real>::item_graph(Tape<Real>& tape, std::span<const bool> mask) {
  auto& params = this->params_;
  const bool learned = lambda_ < 1.0;
  tape.mark(std::string(stage::kExtract));

  std::vector<SparsityPattern::Ptr> patterns;
  std::vector<V> learned_values;
  for (std::size_t k = 0; k < features_.size(); ++k) {
    patterns.push_back(initial_[k].pattern_ptr());
    if (!learned) continue;
    const auto m = features_.modalities[k];
    const auto rep = Stages<Real>::coordinate_represent(
        tape, tape.constant(features_.matrices[k]), tape.param(params.get(param_name("proj", m))));
    const auto pattern = knn_graph(rep.value(), knn_).pattern_ptr();
    const auto rows = pattern->row_ids();
    const auto cols = pattern->col_ids();
    const auto sim = tape.relu(tape.cosine(tape.row_gather(rep, rows), tape.row_gather(rep, cols)));
    learned_values.push_back(tape.row_normalize_values(pattern, sim));
    patterns.push_back(pattern);
  }

  const auto merged = pattern_union(patterns);
  const auto nnz = merged.pattern->nnz();
  std::vector<V> graphs;
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const std::size_t slot = learned ? 2 * k : k;
    const auto& init = initial_[k];
    const Matrix<Real> init_values(init.nnz(), 1, std::vector<Real>(init.values().begin(), init.values().end()));
    auto g = tape.scatter_rows(tape.constant(init_values), merged.positions[slot], nnz);
    if (learned) {
      g = tape.add(tape.scale(g, static_cast<Real>(lambda_)),
                   tape.scale(tape.scatter_rows(learned_values[k], merged.positions[slot + 1], nnz),
                              static_cast<Real>(1.0 - lambda_)));
    }
    graphs.push_back(g);
  }
  const auto values = Stages<Real>::early_fuse(tape, graphs, EarlyOp::kWeightedSum,
                                               tape.param(params.get("fusion_logits")), mask);
  return {merged.pattern, values};
}

template <typename Real>
Var<Real> Lattice<Real>::item_forward(Tape<Real>& tape) {
  const auto graph = item_graph(tape);
  const auto item = tape.param(this->params_.get("item"));
  V h = item;
  for (int l = 0; l < layers_; ++l) h = tape.spmm_values(graph.pattern, graph.values, h);
  if (layers_ == 0) return item;
  return tape.add(item, tape.l2_normalize(h));
}

template <typename Real>
Var<Real> Lattice<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  (void)rng;
  const detail::BatchIndex b(batch);
  const auto items = item_forward(tape);
  const auto u = tape.row_gather(tape.param(this->params_.get("user")), b.users);
  const auto pos = Stages<Real>::predict(tape, u, tape.row_gather(items, b.pos));
  const auto neg = Stages<Real>::predict(tape, u, tape.row_gather(items, b.neg));
  return bpr_loss(tape, pos, neg);
}

template <typename Real>
Matrix<Real> Lattice<Real>::score(std::span<const std::uint32_t> users) {
  const auto items = detail::evaluate<Real>([&](Tape<Real>& t) { return item_forward(t); });
  return matmul_transposed(gather_rows(this->params_.get("user").value, users), items);
}

template class Lattice<float>;
template class Lattice<double>;

}  // namespace mmrec
