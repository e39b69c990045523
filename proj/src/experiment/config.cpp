#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mmrec/experiment.hpp"

namespace mmrec {

namespace pt = boost::property_tree;

std::string_view to_string(DataSource source) {
  return source == DataSource::kSynthetic ? "synthetic" : "files";
}

DataSource parse_data_source(std::string_view name) {
  if (name == "files") return DataSource::kFiles;
  if (name == "synthetic") return DataSource::kSynthetic;
  throw ConfigError("unknown data source '" + std::string(name) + "' (expected files or synthetic)");
}

std::string_view to_string(FeatureFormat format) { return format == FeatureFormat::kText ? "text" : "binary"; }

FeatureFormat parse_feature_format(std::string_view name) {
  if (name == "binary") return FeatureFormat::kBinary;
  if (name == "text") return FeatureFormat::kText;
  throw ConfigError("unknown feature format '" + std::string(name) + "' (expected binary or text)");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty entry in list '" + text + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values, auto&& format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format(values[i]);
  }
  return out;
}

/// Typed reads from one INI section; finish() rejects keys nobody asked for.
class Section {
 public:
  Section(std::string name, const pt::ptree* tree) : name_(std::move(name)), tree_(tree) {}

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!tree_) return;
    const auto it = tree_->find(key);
    if (it == tree_->not_found()) return;
    used_.insert(key);
    const std::string value = it->second.data();
    try {
      out = convert<T>(value);
    } catch (const ConfigError& e) {
      throw ConfigError("[" + name_ + "] " + key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("[" + name_ + "] " + key + ": " + e.what());
    }
  }

  /// Every key of the section, for free-form sections like [features].
  std::vector<std::pair<std::string, std::string>> entries() {
    std::vector<std::pair<std::string, std::string>> out;
    if (!tree_) return out;
    for (const auto& [k, v] : *tree_) {
      used_.insert(k);
      out.emplace_back(k, v.data());
    }
    return out;
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [k, v] : *tree_) {
      if (!used_.contains(k)) throw ConfigError("unknown key '" + k + "' in [" + name_ + "]");
    }
  }

 private:
  template <typename T>
  static T convert(const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "yes" || s == "1") return true;
      if (s == "false" || s == "no" || s == "0") return false;
      throw ConfigError("expected true or false, got '" + s + "'");
    } else if constexpr (std::is_same_v<T, double>) {
      double v = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("expected a number, got '" + s + "'");
      return v;
    } else if constexpr (std::is_integral_v<T>) {
      T v = 0;
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
      return v;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> out;
      for (const auto& item : split_list(s)) out.push_back(convert<double>(item));
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      std::vector<std::size_t> out;
      for (const auto& item : split_list(s)) out.push_back(convert<std::size_t>(item));
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<ModelKind>>) {
      std::vector<ModelKind> out;
      for (const auto& item : split_list(s)) out.push_back(parse_model_kind(item));
      return out;
    } else if constexpr (std::is_same_v<T, DataSource>) {
      return parse_data_source(s);
    } else if constexpr (std::is_same_v<T, FeatureFormat>) {
      return parse_feature_format(s);
    } else if constexpr (std::is_same_v<T, MissingPolicy>) {
      return parse_missing_policy(s);
    } else if constexpr (std::is_same_v<T, ModelKind>) {
      return parse_model_kind(s);
    } else if constexpr (std::is_same_v<T, OptimizerKind>) {
      return parse_optimizer(s);
    } else {
      static_assert(std::is_same_v<T, ShortHeadRule>);
      return parse_short_head_rule(s);
    }
  }

  std::string name_;
  const pt::ptree* tree_;
  std::set<std::string> used_;
};

const std::set<std::string> kSections{"dataset", "features",   "synthetic", "preprocess", "model",
                                      "trainer", "grid",       "evaluation", "benchmark", "run"};

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [name, body] : tree) {
    if (!kSections.contains(name)) throw ConfigError(source + ": unknown section [" + name + "]");
    if (!body.data().empty()) throw ConfigError(source + ": key '" + name + "' outside any section");
  }
  auto section = [&](const char* name) {
    const auto it = tree.find(name);
    return Section(name, it == tree.not_found() ? nullptr : &it->second);
  };

  ExperimentConfig c;
  c.synthetic.dims.clear();
  try {
    auto s = section("dataset");
    s.read("name", c.dataset);
    s.read("source", c.source);
    s.read("root", c.data_root);
    s.read("interactions", c.interactions);
    s.read("header", c.header);
    s.read("feature_format", c.feature_format);
    s.read("missing", c.missing);
    s.read("normalize", c.normalize);
    s.finish();

    auto f = section("features");
    for (const auto& [key, path] : f.entries()) c.features.emplace_back(parse_modality(key), path);
    f.finish();

    auto y = section("synthetic");
    y.read("users", c.synthetic.n_users);
    y.read("items", c.synthetic.n_items);
    y.read("noise", c.synthetic.noise);
    y.read("density", c.synthetic.density);
    y.read("seed", c.synthetic.seed);
    for (auto m : kAllModalities) {
      std::size_t dim = 0;
      y.read(std::string(to_string(m)) + "_dim", dim);
      if (dim > 0) c.synthetic.dims.emplace_back(m, dim);
    }
    y.finish();
    if (c.synthetic.dims.empty()) c.synthetic.dims = SyntheticParams{}.dims;

    auto p = section("preprocess");
    p.read("k_core", c.k_core);
    p.read("train_ratio", c.split.train_ratio);
    p.read("validation_fraction", c.split.validation_fraction);
    p.read("seed", c.split.seed);
    p.finish();

    auto m = section("model");
    m.read("tag", c.model.kind);
    m.read("dim", c.model.dim);
    m.read("layers", c.model.layers);
    m.read("backbone_layers", c.model.backbone_layers);
    m.read("knn", c.model.knn);
    m.read("lattice_lambda", c.model.lattice_lambda);
    m.read("dropout", c.model.dropout);
    m.read("prune_ratio", c.model.prune_ratio);
    m.read("mm_loss_weight", c.model.mm_loss_weight);
    m.read("align_weight", c.model.align_weight);
    m.read("vbpr_bias", c.model.vbpr_bias);
    m.read("mmgcn_leaky", c.model.mmgcn_leaky);
    m.read("mmgcn_id_embeddings", c.model.mmgcn_id_embeddings);
    m.finish();

    auto t = section("trainer");
    t.read("epochs", c.trainer.epochs);
    t.read("batch_size", c.trainer.batch_size);
    t.read("learning_rate", c.trainer.learning_rate);
    t.read("reg_weight", c.trainer.reg_weight);
    t.read("optimizer", c.trainer.optimizer);
    t.read("seed", c.trainer.seed);
    t.finish();

    auto g = section("grid");
    g.read("learning_rates", c.grid.learning_rates);
    g.read("reg_weights", c.grid.reg_weights);
    g.read("eval_every", c.eval_every);
    g.finish();

    auto e = section("evaluation");
    e.read("cutoffs", c.cutoffs);
    e.read("short_head", c.short_head);
    e.finish();

    auto b = section("benchmark");
    b.read("roster", c.roster);
    b.finish();

    auto r = section("run");
    r.read("output", c.output);
    r.read("threads", c.threads);
    r.finish();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[dataset]\n"
    << "name = " << c.dataset << '\n'
    << "source = " << to_string(c.source) << '\n'
    << "root = " << c.data_root << '\n';
  if (!c.interactions.empty()) o << "interactions = " << c.interactions << '\n';
  o << "header = " << b(c.header) << '\n'
    << "feature_format = " << to_string(c.feature_format) << '\n'
    << "missing = " << to_string(c.missing) << '\n'
    << "normalize = " << b(c.normalize) << "\n\n";
  if (!c.features.empty()) {
    o << "[features]\n";
    for (const auto& [m, path] : c.features) o << to_string(m) << " = " << path << '\n';
    o << '\n';
  }
  o << "[synthetic]\n"
    << "users = " << c.synthetic.n_users << '\n'
    << "items = " << c.synthetic.n_items << '\n';
  for (const auto& [m, dim] : c.synthetic.dims) o << to_string(m) << "_dim = " << dim << '\n';
  o << "noise = " << format_double(c.synthetic.noise) << '\n'
    << "density = " << format_double(c.synthetic.density) << '\n'
    << "seed = " << c.synthetic.seed << "\n\n";
  o << "[preprocess]\n"
    << "k_core = " << c.k_core << '\n'
    << "train_ratio = " << format_double(c.split.train_ratio) << '\n'
    << "validation_fraction = " << format_double(c.split.validation_fraction) << '\n'
    << "seed = " << c.split.seed << "\n\n";
  const auto& m = c.model;
  o << "[model]\n"
    << "tag = " << to_string(m.kind) << '\n'
    << "dim = " << m.dim << '\n'
    << "layers = " << m.layers << '\n'
    << "backbone_layers = " << m.backbone_layers << '\n'
    << "knn = " << m.knn << '\n'
    << "lattice_lambda = " << format_double(m.lattice_lambda) << '\n'
    << "dropout = " << format_double(m.dropout) << '\n'
    << "prune_ratio = " << format_double(m.prune_ratio) << '\n'
    << "mm_loss_weight = " << format_double(m.mm_loss_weight) << '\n'
    << "align_weight = " << format_double(m.align_weight) << '\n'
    << "vbpr_bias = " << b(m.vbpr_bias) << '\n'
    << "mmgcn_leaky = " << b(m.mmgcn_leaky) << '\n'
    << "mmgcn_id_embeddings = " << b(m.mmgcn_id_embeddings) << "\n\n";
  o << "[trainer]\n"
    << "epochs = " << c.trainer.epochs << '\n'
    << "batch_size = " << c.trainer.batch_size << '\n'
    << "learning_rate = " << format_double(c.trainer.learning_rate) << '\n'
    << "reg_weight = " << format_double(c.trainer.reg_weight) << '\n'
    << "optimizer = " << to_string(c.trainer.optimizer) << '\n'
    << "seed = " << c.trainer.seed << "\n\n";
  o << "[grid]\n"
    << "learning_rates = " << join(c.grid.learning_rates, format_double) << '\n'
    << "reg_weights = " << join(c.grid.reg_weights, format_double) << '\n'
    << "eval_every = " << c.eval_every << "\n\n";
  o << "[evaluation]\n"
    << "cutoffs = " << join(c.cutoffs, [](std::size_t k) { return std::to_string(k); }) << '\n'
    << "short_head = " << to_string(c.short_head) << "\n\n";
  if (!c.roster.empty()) {
    o << "[benchmark]\n"
      << "roster = " << join(c.roster, [](ModelKind k) { return std::string(to_string(k)); }) << "\n\n";
  }
  o << "[run]\n"
    << "output = " << c.output << '\n'
    << "threads = " << c.threads << '\n';
  return o.str();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  auto config = parse_config(text.str(), path.string());
  if (const char* root = std::getenv("MMREC_DATA_ROOT"); root && *root) {
    config.data_root = root;
  } else if (std::filesystem::path(config.data_root).is_relative()) {
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    config.data_root = (base / config.data_root).lexically_normal().string();
  }
  return config;
}

std::filesystem::path ExperimentConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : std::filesystem::path(data_root) / p;
}

std::vector<ModelKind> ExperimentConfig::benchmark_roster() const {
  return roster.empty() ? std::vector<ModelKind>{model.kind} : roster;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
  split.seed = seed;
  trainer.seed = seed;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("config: " + what); };
  if (dataset.empty()) fail("dataset name is empty");
  if (output.empty()) fail("output directory is empty");
  if (threads < 1) fail("threads must be at least 1");
  if (k_core < 1) fail("k_core must be at least 1");
  if (!(split.train_ratio > 0.0 && split.train_ratio < 1.0)) fail("train_ratio must be in (0, 1)");
  if (!(split.validation_fraction >= 0.0 && split.validation_fraction <= 1.0)) {
    fail("validation_fraction must be in [0, 1]");
  }
  if (eval_every < 1) fail("eval_every must be positive");
  if (cutoffs.empty()) fail("cutoffs are empty");
  for (auto k : cutoffs) {
    if (k < 1) fail("cutoffs must be positive");
  }
  std::set<std::size_t> distinct(cutoffs.begin(), cutoffs.end());
  if (distinct.size() != cutoffs.size()) fail("duplicate cutoff");
  std::set<ModelKind> models(roster.begin(), roster.end());
  if (models.size() != roster.size()) fail("duplicate model in roster");
  try {
    model.validate();
    trainer.validate();
    grid.validate();
    for (auto kind : benchmark_roster()) {
      auto m = model;
      m.kind = kind;
      m.validate();
    }
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (source == DataSource::kSynthetic) {
    if (synthetic.dims.empty()) fail("synthetic data needs at least one modality");
    return;
  }
  if (interactions.empty()) fail("[dataset] interactions is not set");
  if (!std::filesystem::is_regular_file(resolve(interactions))) {
    fail("interactions file not found: " + resolve(interactions).string());
  }
  if (features.empty()) fail("no [features] files configured");
  std::set<Modality> seen;
  for (const auto& [m, path] : features) {
    if (!seen.insert(m).second) fail("modality listed twice: " + std::string(to_string(m)));
    if (!std::filesystem::is_regular_file(resolve(path))) {
      fail(std::string(to_string(m)) + " feature file not found: " + resolve(path).string());
    }
  }
}

}  // namespace mmrec
