#include "mmrec/model.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include "json.hpp"
#include "mmrec/binary_io.hpp"
#include "mmrec/models.hpp"

namespace mmrec {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kVbpr: return "vbpr";
    case ModelKind::kMmgcn: return "mmgcn";
    case ModelKind::kGrcn: return "grcn";
    case ModelKind::kLattice: return "lattice";
    case ModelKind::kBm3: return "bm3";
    case ModelKind::kFreedom: return "freedom";
  }
  return "unknown";
}

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kVbpr: return "VBPR";
    case ModelKind::kMmgcn: return "MMGCN";
    case ModelKind::kGrcn: return "GRCN";
    case ModelKind::kLattice: return "LATTICE";
    case ModelKind::kBm3: return "BM3";
    case ModelKind::kFreedom: return "FREEDOM";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view tag) {
  for (auto k : kAllModels) {
    if (to_string(k) == tag) return k;
  }
  throw std::invalid_argument("unknown model '" + std::string(tag) +
                              "' (expected vbpr, mmgcn, grcn, lattice, bm3 or freedom)");
}

int ModelConfig::effective_layers() const {
  if (layers >= 0) return layers;
  switch (kind) {
    case ModelKind::kMmgcn:
    case ModelKind::kGrcn: return 2;
    case ModelKind::kLattice:
    case ModelKind::kFreedom: return 1;
    default: return 0;
  }
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (dim < 1) fail("dim must be at least 1");
  if (layers < -1) fail("layers must be non-negative");
  if (backbone_layers < 0) fail("backbone_layers must be non-negative");
  if (knn < 1) fail("knn must be at least 1");
  if (!(lattice_lambda >= 0.0 && lattice_lambda <= 1.0)) fail("lattice_lambda must lie in [0, 1]");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(prune_ratio >= 0.0 && prune_ratio < 1.0)) fail("prune_ratio must lie in [0, 1)");
  if (!(mm_loss_weight >= 0.0) || !std::isfinite(mm_loss_weight)) fail("mm_loss_weight must be non-negative");
  if (!(align_weight >= 0.0) || !std::isfinite(align_weight)) fail("align_weight must be non-negative");
  if (kind == ModelKind::kMmgcn && effective_layers() == 0 && !mmgcn_id_embeddings) {
    fail("mmgcn with 0 layers and no id embeddings has no representation");
  }
  if (kind == ModelKind::kGrcn && effective_layers() < 1) fail("grcn needs at least one layer");
}

ModelContext ModelContext::from(const Split& split, const MultimodalStore& store) {
  ModelContext c;
  c.n_users = split.n_users();
  c.n_items = split.n_items();
  c.train = split.train;
  if (store.n_items() != c.n_items) {
    throw std::invalid_argument("feature store is bound to a different item set");
  }
  for (auto m : store.modalities()) c.features.emplace_back(m, store.matrix(m));
  return c;
}

std::vector<Modality> ModelContext::modalities() const {
  std::vector<Modality> out;
  for (const auto& [m, _] : features) out.push_back(m);
  return out;
}

template <typename Real>
FeatureSet<Real> FeatureSet<Real>::from(const ModelContext& context) {
  FeatureSet f;
  for (const auto& [m, values] : context.features) {
    if (values.rows() != context.n_items) {
      throw ShapeError(std::string(to_string(m)) + " features have " +
                       std::to_string(values.rows()) + " rows for " +
                       std::to_string(context.n_items) + " items");
    }
    f.modalities.push_back(m);
    f.matrices.push_back(values.template cast<Real>());
  }
  return f;
}

template struct FeatureSet<float>;
template struct FeatureSet<double>;

PipelineSpec declared_pipeline(ModelKind kind, const std::vector<Modality>& modalities,
                               std::size_t dim) {
  PipelineSpec p;
  p.representation = Representation::kCoordinate;
  p.modalities = modalities;
  p.dim = dim;
  switch (kind) {
    case ModelKind::kVbpr:
    case ModelKind::kBm3:
    case ModelKind::kFreedom:
      p.fusion = Fusion::kLate;
      p.late_op = LateOp::kSum;
      break;
    case ModelKind::kMmgcn:
      p.fusion = Fusion::kEarly;
      p.early_op = EarlyOp::kSum;
      break;
    case ModelKind::kGrcn:
      p.fusion = Fusion::kEarly;
      p.early_op = EarlyOp::kConcat;
      break;
    case ModelKind::kLattice:
      p.fusion = Fusion::kEarly;
      p.early_op = EarlyOp::kWeightedSum;
      break;
  }
  return p;
}

template <typename Real>
std::unique_ptr<Model<Real>> make_model(const ModelConfig& config, const ModelContext& context,
                                        std::uint64_t seed) {
  config.validate();
  if (context.features.empty()) throw std::invalid_argument("model needs at least one modality");
  switch (config.kind) {
    case ModelKind::kVbpr: return std::make_unique<Vbpr<Real>>(config, context, seed);
    case ModelKind::kMmgcn: return std::make_unique<Mmgcn<Real>>(config, context, seed);
    case ModelKind::kGrcn: return std::make_unique<Grcn<Real>>(config, context, seed);
    case ModelKind::kLattice: return std::make_unique<Lattice<Real>>(config, context, seed);
    case ModelKind::kBm3: return std::make_unique<Bm3<Real>>(config, context, seed);
    case ModelKind::kFreedom: return std::make_unique<Freedom<Real>>(config, context, seed);
  }
  throw std::invalid_argument("unknown model kind");
}

template std::unique_ptr<Model<float>> make_model(const ModelConfig&, const ModelContext&,
                                                  std::uint64_t);
template std::unique_ptr<Model<double>> make_model(const ModelConfig&, const ModelContext&,
                                                   std::uint64_t);

template <typename Real>
std::vector<std::string> orphan_parameters(Model<Real>& model, std::span<const Triple> batch,
                                           std::uint64_t seed) {
  Rng rng(seed);
  model.begin_epoch(rng);
  Tape<Real> tape;
  model.loss(tape, batch, rng);
  std::set<const Parameter<Real>*> touched;
  for (const auto* p : tape.parameters()) touched.insert(p);
  std::vector<std::string> out;
  for (const auto& p : model.parameters()) {
    if (!touched.contains(&p)) out.push_back(p.name);
  }
  return out;
}

template std::vector<std::string> orphan_parameters(Model<float>&, std::span<const Triple>,
                                                    std::uint64_t);
template std::vector<std::string> orphan_parameters(Model<double>&, std::span<const Triple>,
                                                    std::uint64_t);

namespace {

nlohmann::ordered_json config_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = std::string(to_string(c.kind));
  j["dim"] = c.dim;
  j["layers"] = c.effective_layers();
  j["backbone_layers"] = c.backbone_layers;
  j["knn"] = c.knn;
  j["lattice_lambda"] = c.lattice_lambda;
  j["dropout"] = c.dropout;
  j["prune_ratio"] = c.prune_ratio;
  j["mm_loss_weight"] = c.mm_loss_weight;
  j["align_weight"] = c.align_weight;
  j["vbpr_bias"] = c.vbpr_bias;
  j["mmgcn_leaky"] = c.mmgcn_leaky;
  j["mmgcn_id_embeddings"] = c.mmgcn_id_embeddings;
  return j;
}

}  // namespace

void save_checkpoint(const Model<float>& model, const ModelConfig& config,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["model"] = std::string(model.name());
  manifest["pipeline"] = model.pipeline().describe();
  manifest["config"] = config_json(config);
  auto params = nlohmann::ordered_json::array();
  for (const auto& p : model.parameters()) {
    const std::string file = p.name + ".f32";
    params.push_back({{"name", p.name},
                      {"group", std::string(to_string(p.group))},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"file", file}});
    std::string blob;
    blob.reserve(p.value.size() * 4);
    for (auto v : p.value.values()) binary::put_f32(blob, v);
    std::ofstream out(dir / file, std::ios::binary);
    out << blob;
    if (!out) throw std::runtime_error("cannot write checkpoint blob " + (dir / file).string());
  }
  manifest["parameters"] = std::move(params);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir.string());
}

void load_checkpoint(Model<float>& model, const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), e.what());
  }
  if (manifest.value("model", "") != model.name()) {
    throw std::invalid_argument("checkpoint holds model '" + manifest.value("model", "") +
                                "', not '" + std::string(model.name()) + "'");
  }
  const auto& entries = manifest.at("parameters");
  if (entries.size() != model.parameters().size()) {
    throw std::invalid_argument("checkpoint parameter count does not match the model");
  }
  for (const auto& e : entries) {
    auto& p = model.parameters().get(e.at("name").get<std::string>());
    const auto rows = e.at("rows").get<std::size_t>();
    const auto cols = e.at("cols").get<std::size_t>();
    if (rows != p.value.rows() || cols != p.value.cols()) {
      throw ShapeError("checkpoint shape mismatch for " + p.name);
    }
    const auto blob_path = dir / e.at("file").get<std::string>();
    std::ifstream blob_in(blob_path, std::ios::binary);
    const std::string blob((std::istreambuf_iterator<char>(blob_in)), std::istreambuf_iterator<char>());
    if (blob.size() != rows * cols * 4) {
      throw ParseError(blob_path.string(), "expected " + std::to_string(rows * cols * 4) +
                                               " bytes, got " + std::to_string(blob.size()));
    }
    for (std::size_t k = 0; k < rows * cols; ++k) p.value.values()[k] = binary::get_f32(blob.data() + 4 * k);
  }
}

}  // namespace mmrec
