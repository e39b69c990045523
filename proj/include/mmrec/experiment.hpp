#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mmrec/dataset.hpp"
#include "mmrec/evaluation.hpp"
#include "mmrec/model.hpp"
#include "mmrec/synthetic.hpp"
#include "mmrec/trainer.hpp"

namespace mmrec {

/// Invalid experiment configuration or command-line input.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class DataSource { kFiles, kSynthetic };

std::string_view to_string(DataSource source);
DataSource parse_data_source(std::string_view name);
std::string_view to_string(FeatureFormat format);
FeatureFormat parse_feature_format(std::string_view name);

/// One experiment: a dataset, preprocessing, a model, its trainer and grid,
/// evaluation cutoffs and an output directory.
///
/// File form is INI with the sections [dataset], [features], [synthetic],
/// [preprocess], [model], [trainer], [grid], [evaluation], [benchmark] and
/// [run]. Unknown sections or keys are rejected.
struct ExperimentConfig {
  std::string dataset = "dataset";
  DataSource source = DataSource::kFiles;
  /// Relative data paths resolve against this directory.
  std::string data_root = ".";
  std::string interactions;
  bool header = false;
  std::vector<std::pair<Modality, std::string>> features;
  FeatureFormat feature_format = FeatureFormat::kBinary;
  MissingPolicy missing = MissingPolicy::kZeroFill;
  bool normalize = true;
  SyntheticParams synthetic;

  int k_core = 5;
  SplitOptions split;

  ModelConfig model;
  TrainerConfig trainer;
  GridSpec grid;
  int eval_every = 10;

  std::vector<std::size_t> cutoffs{10, 20};
  ShortHeadRule short_head = ShortHeadRule::kTopFraction;
  /// Models run by benchmark, in report order. Empty means just model.kind.
  std::vector<ModelKind> roster;

  std::string output = "runs";
  unsigned threads = 1;

  bool operator==(const ExperimentConfig&) const = default;

  /// Checks values and, for file sources, that every referenced file
  /// exists. Throws ConfigError.
  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;
  std::vector<ModelKind> benchmark_roster() const;
  /// Sets the split and trainer seeds.
  void set_seed(std::uint64_t seed);
};

ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
std::string serialize_config(const ExperimentConfig& config);

/// Reads a config file. A relative data_root is taken relative to the file's
/// directory; the MMREC_DATA_ROOT environment variable replaces it.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Paths of the artifacts under the output directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path prepared() const { return root / "prepared"; }
  std::filesystem::path source() const { return root / "prepared" / "source"; }
  std::filesystem::path run(ModelKind kind) const { return root / std::string(to_string(kind)); }
  std::filesystem::path report() const { return root / "report.md"; }
  std::filesystem::path metrics() const { return root / "metrics.tsv"; }
};

struct PrepareResult {
  DatasetStats raw;
  DatasetStats filtered;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Loads (or generates) the interactions, applies the k-core filter and the
/// hold-out split, and writes split TSVs plus stats.json.
PrepareResult cmd_prepare(const ExperimentConfig& config);

struct TuneResult {
  GridResult grid;
  double learning_rate = 0;
  double reg_weight = 0;
  int epochs = 0;
};

/// Grid search on the validation split; writes grid.tsv and tuned.json.
TuneResult cmd_tune(const ExperimentConfig& config, ModelKind kind);

/// Fits the model with the tuned hyperparameters (or the configured ones
/// when the model was not tuned) for the selected number of epochs. Writes
/// manifest.json before training, then trace.tsv, checkpoint/ and
/// timings.json.
TrainResult cmd_train(const ExperimentConfig& config, ModelKind kind);

/// Ranks the test users with the checkpoint and writes recommendations.tsv,
/// metrics.tsv and report.md.
std::vector<MetricRow> cmd_evaluate(const ExperimentConfig& config, ModelKind kind);

/// tune, train and evaluate for every roster model, then the consolidated
/// metrics.tsv and report.md at the output root.
std::vector<MetricRow> cmd_benchmark(const ExperimentConfig& config);

/// Merges the metrics.tsv files found under the given directories into one
/// markdown report. Throws ConfigError when none is found or when a
/// (dataset, model) pair appears with different cutoff sets or values.
std::string cmd_report(const std::vector<std::filesystem::path>& dirs);

/// Artifacts a complete run directory must hold; returns the missing ones.
std::vector<std::string> audit_run(const std::filesystem::path& run_dir);

}  // namespace mmrec
