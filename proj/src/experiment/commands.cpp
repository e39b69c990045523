#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mmrec/experiment.hpp"
#include "mmrec/log.hpp"

namespace mmrec {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
}

Json stats_json(const DatasetStats& s) {
  char text[32];
  std::snprintf(text, sizeof text, "%.2f", s.sparsity);
  return {{"users", s.users},
          {"items", s.items},
          {"interactions", s.interactions},
          {"sparsity", s.sparsity},
          {"sparsity_percent", text}};
}

/// Merges `values` into the run's timings.json (timings are kept out of the
/// manifest so the manifest stays byte-stable across runs).
void record_timing(const fs::path& run, const std::string& key, double seconds) {
  const auto path = run / "timings.json";
  Json j = fs::exists(path) ? read_json(path) : Json::object();
  j[key] = seconds;
  write_text(path, j.dump(2) + "\n");
}

/// The prepared split, or a ConfigError pointing at `prepare`.
Split load_split(const ExperimentConfig& config) {
  const RunLayout layout{config.output};
  if (!fs::exists(layout.prepared() / "split.json")) {
    throw ConfigError("no prepared split in " + layout.prepared().string() + " (run prepare first)");
  }
  return read_split(layout.prepared());
}

std::vector<std::pair<Modality, fs::path>> feature_files(const ExperimentConfig& config) {
  std::vector<std::pair<Modality, fs::path>> out;
  if (config.source == DataSource::kSynthetic) {
    const RunLayout layout{config.output};
    for (const auto& [m, dim] : config.synthetic.dims) {
      out.emplace_back(m, layout.source() / (std::string(to_string(m)) + ".bin"));
    }
  } else {
    for (const auto& [m, path] : config.features) out.emplace_back(m, config.resolve(path));
  }
  return out;
}

ModelContext load_context(const ExperimentConfig& config, const Split& split) {
  std::vector<ModalityFeatures> features;
  const auto format = config.source == DataSource::kSynthetic ? FeatureFormat::kBinary : config.feature_format;
  for (const auto& [m, path] : feature_files(config)) features.push_back(load_features(path, m, format));
  const MultimodalStore store(split.items, std::move(features), config.missing, config.normalize);
  return ModelContext::from(split, store);
}

ModelConfig model_config(const ExperimentConfig& config, ModelKind kind) {
  auto m = config.model;
  m.kind = kind;
  return m;
}

TrainOptions train_options(const ExperimentConfig& config) {
  TrainOptions o;
  o.eval_every = config.eval_every;
  o.eval_k = 20;
  o.threads = config.threads;
  return o;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Report row position of a display name; unknown names sort after.
std::size_t model_rank(const std::string& name) {
  for (std::size_t r = 0; r < kAllModels.size(); ++r) {
    if (display_name(kAllModels[r]) == name) return r;
  }
  return kAllModels.size();
}

/// Writes metrics.tsv and returns the rows as stored, so report.md is
/// rendered from exactly the values in the TSV.
std::vector<MetricRow> write_metrics(const fs::path& path, const std::vector<MetricRow>& rows) {
  std::ostringstream tsv;
  write_metrics_tsv(tsv, rows);
  write_text(path, tsv.str());
  std::istringstream in(tsv.str());
  return read_metrics_tsv(in, path.string());
}

}  // namespace

PrepareResult cmd_prepare(const ExperimentConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const RunLayout layout{config.output};
  InteractionLog log;
  if (config.source == DataSource::kSynthetic) {
    const auto data = generate_synthetic(config.synthetic);
    write_synthetic(data, layout.source());
    log = data.log;
  } else {
    ParseOptions options;
    options.header = config.header;
    log = parse_interactions(config.resolve(config.interactions), options);
  }
  if (log.empty()) throw std::runtime_error("prepare: no interactions in the input");

  PrepareResult result;
  result.raw = stats(Dataset::from_log(log));
  const auto filtered = k_core_filter(log, config.k_core);
  if (filtered.empty()) {
    throw std::runtime_error("prepare: nothing survives the " + std::to_string(config.k_core) + "-core filter");
  }
  const auto dataset = Dataset::from_log(filtered);
  result.filtered = stats(dataset);
  const auto split = holdout_split(dataset, config.split);
  result.train = split.train.size();
  result.validation = split.validation.size();
  result.test = split.test.size();

  SplitManifest manifest;
  manifest.seed = config.split.seed;
  manifest.train_ratio = config.split.train_ratio;
  manifest.validation_fraction = config.split.validation_fraction;
  manifest.k_core = config.k_core;
  write_split(split, manifest, layout.prepared());

  Json j;
  j["dataset"] = config.dataset;
  j["raw"] = stats_json(result.raw);
  j["filtered"] = stats_json(result.filtered);
  j["split"] = {{"train", result.train},
                {"validation", result.validation},
                {"test", result.test},
                {"total", result.train + result.validation + result.test}};
  write_text(layout.prepared() / "stats.json", j.dump(2) + "\n");
  log::info("prepared " + config.dataset + " in " + fixed(seconds_since(start), 2) + "s");
  return result;
}

TuneResult cmd_tune(const ExperimentConfig& config, ModelKind kind) {
  config.validate();
  const auto split = load_split(config);
  const auto context = load_context(config, split);
  const auto data = TrainData::from(split);
  const auto mc = model_config(config, kind);
  const RunLayout layout{config.output};
  const auto run = layout.run(kind);
  fs::create_directories(run);

  const auto start = std::chrono::steady_clock::now();
  const ModelFactory<float> factory = [&] { return make_model<float>(mc, context, config.trainer.seed); };
  TuneResult result;
  result.grid = grid_search(factory, config.grid, data, config.trainer, train_options(config));
  const auto& best = result.grid.best();
  result.learning_rate = best.learning_rate;
  result.reg_weight = best.reg_weight;
  result.epochs = result.grid.best_epoch;

  std::ostringstream tsv;
  tsv << "index\tlearning_rate\treg_weight\tstatus\tbest_epoch\tbest_recall\n";
  for (const auto& t : result.grid.trials) {
    const bool ok = !t.result.trace.empty();
    tsv << t.index << '\t' << t.learning_rate << '\t' << t.reg_weight << '\t' << (ok ? "ok" : "diverged") << '\t'
        << t.result.best_epoch << '\t' << fixed(t.result.best_recall, 6) << '\n';
  }
  write_text(run / "grid.tsv", tsv.str());
  Json tuned;
  tuned["model"] = std::string(to_string(kind));
  tuned["grid_index"] = result.grid.best_index;
  tuned["learning_rate"] = result.learning_rate;
  tuned["reg_weight"] = result.reg_weight;
  tuned["epochs"] = result.epochs;
  tuned["validation_recall_at_20"] = result.grid.best_recall;
  write_text(run / "tuned.json", tuned.dump(2) + "\n");
  record_timing(run, "tune_seconds", seconds_since(start));
  return result;
}

TrainResult cmd_train(const ExperimentConfig& config, ModelKind kind) {
  config.validate();
  const RunLayout layout{config.output};
  const auto split = load_split(config);
  const auto context = load_context(config, split);
  const auto data = TrainData::from(split);
  const auto mc = model_config(config, kind);
  const auto run = layout.run(kind);
  fs::create_directories(run);

  auto trainer = config.trainer;
  std::string origin = "config";
  if (fs::exists(run / "tuned.json")) {
    const auto tuned = read_json(run / "tuned.json");
    trainer.learning_rate = tuned.at("learning_rate").get<double>();
    trainer.reg_weight = tuned.at("reg_weight").get<double>();
    trainer.epochs = tuned.at("epochs").get<int>();
    origin = "tuned";
  }

  Json manifest;
  manifest["version"] = MMREC_VERSION;
  manifest["dataset"] = config.dataset;
  manifest["model"] = std::string(to_string(kind));
  manifest["pipeline"] = declared_pipeline(kind, context.modalities(), mc.dim).describe();
  manifest["seeds"] = {{"split", config.split.seed}, {"trainer", trainer.seed}};
  if (config.source == DataSource::kSynthetic) manifest["seeds"]["synthetic"] = config.synthetic.seed;
  manifest["dataset_stats"] = read_json(layout.prepared() / "stats.json");
  manifest["hyperparameters"] = {{"origin", origin},
                                 {"learning_rate", trainer.learning_rate},
                                 {"reg_weight", trainer.reg_weight},
                                 {"epochs", trainer.epochs},
                                 {"batch_size", trainer.batch_size},
                                 {"optimizer", std::string(to_string(trainer.optimizer))}};
  manifest["timings"] = "timings.json";
  manifest["config"] = serialize_config(config);
  write_text(run / "manifest.json", manifest.dump(2) + "\n");

  const auto start = std::chrono::steady_clock::now();
  auto model = make_model<float>(mc, context, trainer.seed);
  const auto result = train_loop(*model, data, trainer, train_options(config));
  std::ostringstream trace;
  write_trace_tsv(trace, result.trace);
  write_text(run / "trace.tsv", trace.str());
  save_checkpoint(*model, mc, run / "checkpoint");
  record_timing(run, "train_seconds", seconds_since(start));
  return result;
}

std::vector<MetricRow> cmd_evaluate(const ExperimentConfig& config, ModelKind kind) {
  config.validate();
  const RunLayout layout{config.output};
  const auto run = layout.run(kind);
  if (!fs::exists(run / "checkpoint" / "manifest.json")) {
    throw ConfigError("no checkpoint in " + run.string() + " (run train first)");
  }
  const auto split = load_split(config);
  const auto context = load_context(config, split);
  const auto mc = model_config(config, kind);

  const auto start = std::chrono::steady_clock::now();
  auto model = make_model<float>(mc, context, config.trainer.seed);
  load_checkpoint(*model, run / "checkpoint");

  const auto popularity = PopularityProfile::from(split.train, split.n_items(), config.short_head);
  const auto train = items_by_user(split.train, split.n_users());
  const auto test = items_by_user(split.test, split.n_users());
  const auto users = users_with_items(test);
  RankOptions options;
  options.k = *std::max_element(config.cutoffs.begin(), config.cutoffs.end());
  options.threads = config.threads;
  const auto lists = rank_topk(*model, users, train, popularity.catalog, options);
  const auto rows = evaluate_lists(lists, test, popularity, config.cutoffs, config.dataset,
                                   std::string(display_name(kind)));
  std::vector<MetricRow> stored;

  std::ostringstream recs;
  write_recommendations(recs, lists, split.users, split.items);
  write_text(run / "recommendations.tsv", recs.str());
  stored = write_metrics(run / "metrics.tsv", rows);
  write_text(run / "report.md", metrics_markdown(stored));
  record_timing(run, "evaluate_seconds", seconds_since(start));
  return stored;
}

std::vector<MetricRow> cmd_benchmark(const ExperimentConfig& config) {
  config.validate();
  const RunLayout layout{config.output};
  std::vector<MetricRow> rows;
  for (auto kind : config.benchmark_roster()) {
    log::info("benchmark: " + std::string(display_name(kind)));
    cmd_tune(config, kind);
    cmd_train(config, kind);
    const auto r = cmd_evaluate(config, kind);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto stored = write_metrics(layout.metrics(), rows);
  write_text(layout.report(), metrics_markdown(stored));
  return stored;
}

std::string cmd_report(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw ConfigError("report: no run directories given");
  std::vector<fs::path> files;
  for (const auto& dir : dirs) {
    if (!fs::is_directory(dir)) throw ConfigError("report: not a directory: " + dir.string());
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "metrics.tsv") files.push_back(entry.path());
    }
  }
  if (files.empty()) throw ConfigError("report: no metrics.tsv found under the given directories");
  std::sort(files.begin(), files.end());

  std::map<std::tuple<std::string, std::string, std::size_t>, MetricRow> cells;
  std::vector<std::string> datasets;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    for (auto& row : read_metrics_tsv(in, file.string())) {
      const auto key = std::tuple{row.dataset, row.model, row.k};
      if (const auto it = cells.find(key); it != cells.end()) {
        if (it->second != row) {
          throw ConfigError("report: conflicting values for " + row.model + " on " + row.dataset + " at k=" +
                            std::to_string(row.k) + " (" + file.string() + ")");
        }
        continue;
      }
      if (std::find(datasets.begin(), datasets.end(), row.dataset) == datasets.end()) datasets.push_back(row.dataset);
      cells.emplace(key, std::move(row));
    }
  }

  std::map<std::pair<std::string, std::string>, std::set<std::size_t>> cutoffs;
  for (const auto& [key, row] : cells) cutoffs[{row.dataset, row.model}].insert(row.k);
  const auto& reference = cutoffs.begin()->second;
  for (const auto& [who, ks] : cutoffs) {
    if (ks != reference) {
      throw ConfigError("report: conflicting cutoff sets (" + who.second + " on " + who.first + ")");
    }
  }

  std::vector<MetricRow> rows;
  for (const auto& [key, row] : cells) rows.push_back(row);
  std::stable_sort(rows.begin(), rows.end(), [&](const MetricRow& a, const MetricRow& b) {
    const auto da = std::find(datasets.begin(), datasets.end(), a.dataset);
    const auto db = std::find(datasets.begin(), datasets.end(), b.dataset);
    if (da != db) return da < db;
    const auto ra = model_rank(a.model), rb = model_rank(b.model);
    if (ra != rb) return ra < rb;
    if (a.model != b.model) return a.model < b.model;
    return a.k < b.k;
  });
  return metrics_markdown(rows);
}

std::vector<std::string> audit_run(const fs::path& run_dir) {
  static const char* kRequired[] = {"manifest.json",       "trace.tsv",   "checkpoint/manifest.json",
                                    "recommendations.tsv", "metrics.tsv", "report.md"};
  std::vector<std::string> missing;
  for (const auto* name : kRequired) {
    if (!fs::is_regular_file(run_dir / name)) missing.emplace_back(name);
  }
  return missing;
}

}  // namespace mmrec
