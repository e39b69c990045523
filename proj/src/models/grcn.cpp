#include "common.hpp"
#include "mmrec/log.hpp"

namespace mmrec {

using detail::param_name;

template <typename Real>
Grcn<Real>::Grcn(const ModelConfig& config, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(declared_pipeline(ModelKind::kGrcn, context.modalities(), config.dim),
                  context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)),
      edges_(context.train),
      layers_(config.effective_layers()) {
  if (layers_ < 1) throw std::invalid_argument("grcn needs at least one layer");
  const auto adjacency = bipartite_adjacency<Real>(context.n_users, context.n_items, edges_);
  pattern_ = adjacency.pattern_ptr();
  entry_edges_ = bipartite_entry_edges(*pattern_, context.n_users, edges_);
  for (const auto& e : edges_) {
    edge_users_.push_back(e.user);
    edge_items_.push_back(e.item);
  }
  Rng rng(seed);
  const auto d = config.dim;
  auto& params = this->params_;
  params.add("id", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_users + context.n_items, d, rng));
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    params.add(param_name("user_pref", m), ParamGroup::kPredictor,
               xavier_uniform<Real>(context.n_users, d, rng));
    params.add(param_name("proj", m), ParamGroup::kRepresentation,
               xavier_uniform<Real>(features_.matrices[k].cols(), d, rng));
  }
}

template <typename Real>
Var<Real> Grcn<Real>::edge_gate(Tape<Real>& tape) {
  auto& params = this->params_;
  V gate;
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    const auto rep = Stages<Real>::coordinate_represent(
        tape, tape.constant(features_.matrices[k]), tape.param(params.get(param_name("proj", m))));
    const auto pref = tape.param(params.get(param_name("user_pref", m)));
    const auto g = tape.relu(tape.cosine(tape.row_gather(pref, edge_users_), tape.row_gather(rep, edge_items_)));
    gate = gate.valid() ? tape.maximum(gate, g) : g;
  }
  return gate;
}

template <typename Real>
Var<Real> Grcn<Real>::refine(Tape<Real>& tape, V gate) const {
  return tape.sym_normalize_values(pattern_, tape.row_gather(gate, entry_edges_));
}

template <typename Real>
Var<Real> Grcn<Real>::forward(Tape<Real>& tape) {
  auto& params = this->params_;
  tape.mark(std::string(stage::kExtract));
  const auto values = refine(tape, edge_gate(tape));
  auto propagate = [&](V x, bool include_input) {
    V out = include_input ? x : V{};
    for (int l = 0; l < layers_; ++l) {
      x = tape.spmm_values(pattern_, values, x);
      out = out.valid() ? tape.add(out, x) : x;
    }
    return out;
  };
  std::vector<V> parts{propagate(tape.param(params.get("id")), true)};
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    const auto rep = Stages<Real>::coordinate_represent(
        tape, tape.constant(features_.matrices[k]), tape.param(params.get(param_name("proj", m))));
    const std::vector<V> stacked{tape.param(params.get(param_name("user_pref", m))), rep};
    parts.push_back(propagate(tape.concat_rows(stacked), false));
  }
  return Stages<Real>::early_fuse(tape, parts, EarlyOp::kConcat);
}

template <typename Real>
Var<Real> Grcn<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  (void)rng;
  const detail::BatchIndex b(batch);
  const auto z = forward(tape);
  const auto u = tape.row_gather(z, b.users);
  const auto pos = Stages<Real>::predict(tape, u, tape.row_gather(z, detail::shifted(b.pos, this->n_users_)));
  const auto neg = Stages<Real>::predict(tape, u, tape.row_gather(z, detail::shifted(b.neg, this->n_users_)));
  return bpr_loss(tape, pos, neg);
}

template <typename Real>
std::size_t Grcn<Real>::fully_pruned_users() {
  const auto gate = detail::evaluate<Real>([&](Tape<Real>& t) { return edge_gate(t); });
  std::vector<char> any(this->n_users_, 0);
  std::vector<char> seen(this->n_users_, 0);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    seen[edges_[e].user] = 1;
    if (gate(e, 0) > Real{0}) any[edges_[e].user] = 1;
  }
  std::size_t count = 0;
  for (std::size_t u = 0; u < this->n_users_; ++u) count += seen[u] && !any[u];
  return count;
}

template <typename Real>
Matrix<Real> Grcn<Real>::score(std::span<const std::uint32_t> users) {
  if (const auto pruned = fully_pruned_users(); pruned > 0) {
    log::warn("grcn: " + std::to_string(pruned) + " user(s) have every edge gated to zero");
  }
  const auto z = detail::evaluate<Real>([&](Tape<Real>& t) { return forward(t); });
  std::vector<std::uint32_t> items(this->n_items_);
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = static_cast<std::uint32_t>(this->n_users_ + i);
  return matmul_transposed(gather_rows(z, users), gather_rows(z, items));
}

template class Grcn<float>;
template class Grcn<double>;

}  // namespace mmrec
