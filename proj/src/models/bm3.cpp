#include "common.hpp"

namespace mmrec {

using detail::param_name;

namespace {

/// mean over rows of 1 - cos(a_r, b_r).
template <typename Real>
Var<Real> cosine_distance(Tape<Real>& tape, Var<Real> a, Var<Real> b) {
  return tape.mean(tape.add_scalar(tape.scale(tape.cosine(a, b), Real{-1}), Real{1}));
}

}  // namespace

template <typename Real>
Bm3<Real>::Bm3(const ModelConfig& config, const ModelContext& context, std::uint64_t seed)
    : Model<Real>(declared_pipeline(ModelKind::kBm3, context.modalities(), config.dim),
                  context.n_users, context.n_items),
      features_(FeatureSet<Real>::from(context)),
      adjacency_(sym_normalize(bipartite_adjacency<Real>(context.n_users, context.n_items, context.train))),
      layers_(config.backbone_layers),
      dropout_(static_cast<Real>(config.dropout)),
      align_weight_(static_cast<Real>(config.align_weight)) {
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw std::invalid_argument("bm3: dropout must lie in [0, 1)");
  }
  Rng rng(seed);
  const auto d = config.dim;
  auto& params = this->params_;
  params.add("user", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_users, d, rng));
  params.add("item", ParamGroup::kPredictor, xavier_uniform<Real>(context.n_items, d, rng));
  params.add("predictor", ParamGroup::kPredictor, Matrix<Real>::identity(d));
  for (std::size_t k = 0; k < features_.size(); ++k) {
    params.add(param_name("proj", features_.modalities[k]), ParamGroup::kRepresentation,
               xavier_uniform<Real>(features_.matrices[k].cols(), d, rng));
  }
}

template <typename Real>
Var<Real> Bm3<Real>::backbone(Tape<Real>& tape) {
  auto& params = this->params_;
  const std::vector<V> stacked{tape.param(params.get("user")), tape.param(params.get("item"))};
  return light_propagate(tape, adjacency_, tape.concat_rows(stacked), layers_);
}

template <typename Real>
typename Bm3<Real>::Losses Bm3<Real>::losses(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  auto& params = this->params_;
  const detail::BatchIndex b(batch);
  tape.mark(std::string(stage::kExtract));
  const auto z = backbone(tape);
  const auto w = tape.param(params.get("predictor"));
  const auto u = tape.row_gather(z, b.users);
  const auto i = tape.row_gather(z, detail::shifted(b.pos, this->n_users_));
  if (target_mode_ == TargetMode::kRecord) recorded_targets_.clear();
  std::size_t next_target = 0;
  const auto target = [&](V x) {
    const auto t = tape.stop_gradient(tape.dropout(x, dropout_, rng));
    if (target_mode_ == TargetMode::kRecord) recorded_targets_.push_back(t.value());
    if (target_mode_ == TargetMode::kReplay) return tape.constant(recorded_targets_.at(next_target++));
    return t;
  };

  Losses out;
  out.reconstruction = tape.add(cosine_distance(tape, tape.matmul(u, w), target(i)),
                                cosine_distance(tape, tape.matmul(i, w), target(u)));
  std::vector<V> inter;
  std::vector<V> intra;
  for (std::size_t k = 0; k < features_.size(); ++k) {
    const auto m = features_.modalities[k];
    const auto f = tape.constant(gather_rows(features_.matrices[k], b.pos));
    const auto rep = Stages<Real>::coordinate_represent(tape, f, tape.param(params.get(param_name("proj", m))));
    inter.push_back(cosine_distance(tape, tape.matmul(rep, w), target(i)));
    intra.push_back(cosine_distance(tape, tape.dropout(rep, dropout_, rng), target(rep)));
  }
  out.inter = Stages<Real>::late_fuse(tape, inter, LateOp::kSum);
  out.intra = Stages<Real>::late_fuse(tape, intra, LateOp::kSum);
  return out;
}

template <typename Real>
Var<Real> Bm3<Real>::loss(Tape<Real>& tape, std::span<const Triple> batch, Rng& rng) {
  const auto l = losses(tape, batch, rng);
  return tape.add(l.reconstruction, tape.scale(tape.add(l.inter, l.intra), align_weight_));
}

template <typename Real>
Matrix<Real> Bm3<Real>::score(std::span<const std::uint32_t> users) {
  const auto w = this->params_.get("predictor").value;
  const auto z = matmul(detail::evaluate<Real>([&](Tape<Real>& t) { return backbone(t); }), w);
  std::vector<std::uint32_t> items(this->n_items_);
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = static_cast<std::uint32_t>(this->n_users_ + i);
  return matmul_transposed(gather_rows(z, users), gather_rows(z, items));
}

template class Bm3<float>;
template class Bm3<double>;

}  // namespace mmrec
