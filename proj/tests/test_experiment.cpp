#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mmrec/experiment.hpp"
#include "mmrec/log.hpp"
#include "support/tempdir.hpp"

using namespace mmrec;
using mmrec::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_synthetic(const fs::path& out) {
  ExperimentConfig c;
  c.dataset = "synthetic";
  c.source = DataSource::kSynthetic;
  c.synthetic.n_users = 30;
  c.synthetic.n_items = 60;
  c.synthetic.density = 0.2;
  c.synthetic.seed = 3;
  c.k_core = 2;
  c.model.dim = 8;
  c.model.knn = 5;
  c.trainer.epochs = 4;
  c.trainer.batch_size = 64;
  c.grid.learning_rates = {1e-3, 1e-2};
  c.grid.reg_weights = {1e-5};
  c.eval_every = 2;
  c.output = out.string();
  return c;
}

ExperimentConfig random_config(Rng& rng) {
  ExperimentConfig c;
  c.dataset = "set" + std::to_string(rng.uniform_index(100));
  c.source = rng.bernoulli(0.5) ? DataSource::kFiles : DataSource::kSynthetic;
  c.data_root = "/data/" + std::to_string(rng.uniform_index(10));
  c.interactions = "ratings.tsv";
  c.header = rng.bernoulli(0.5);
  c.features = {{Modality::kTextual, "text.bin"}, {Modality::kVisual, "vis.bin"}};
  if (rng.bernoulli(0.5)) c.features.emplace_back(Modality::kAudio, "a.txt");
  c.feature_format = rng.bernoulli(0.5) ? FeatureFormat::kText : FeatureFormat::kBinary;
  c.missing = rng.bernoulli(0.5) ? MissingPolicy::kMeanImpute : MissingPolicy::kError;
  c.normalize = rng.bernoulli(0.5);
  c.synthetic.n_users = 1 + rng.uniform_index(500);
  c.synthetic.dims = {{Modality::kVisual, 1 + rng.uniform_index(32)}, {Modality::kAudio, 3}};
  c.synthetic.noise = rng.uniform();
  c.synthetic.density = rng.uniform(0.01, 0.5);
  c.synthetic.seed = rng.next();
  c.k_core = 1 + static_cast<int>(rng.uniform_index(10));
  c.split.train_ratio = rng.uniform(0.1, 0.9);
  c.split.validation_fraction = rng.uniform();
  c.split.seed = rng.next();
  c.model.kind = kAllModels[rng.uniform_index(6)];
  c.model.dim = 1 + rng.uniform_index(128);
  c.model.layers = static_cast<int>(rng.uniform_index(4)) - 1;
  c.model.lattice_lambda = rng.uniform();
  c.model.dropout = rng.uniform(0, 0.9);
  c.model.mm_loss_weight = rng.normal();
  c.model.vbpr_bias = rng.bernoulli(0.5);
  c.model.mmgcn_leaky = rng.bernoulli(0.5);
  c.trainer.epochs = 1 + static_cast<int>(rng.uniform_index(300));
  c.trainer.learning_rate = rng.uniform(1e-5, 1.0);
  c.trainer.reg_weight = rng.uniform(0, 1e-2);
  c.trainer.optimizer = rng.bernoulli(0.5) ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  c.trainer.seed = rng.next();
  c.grid.learning_rates = {rng.uniform(1e-5, 1e-1), 0.1 + rng.uniform()};
  c.grid.reg_weights = {rng.uniform(0, 1e-2)};
  c.eval_every = 1 + static_cast<int>(rng.uniform_index(20));
  c.cutoffs = {5, 10, 50};
  c.short_head = rng.bernoulli(0.5) ? ShortHeadRule::kInteractionShare : ShortHeadRule::kTopFraction;
  if (rng.bernoulli(0.5)) c.roster = {ModelKind::kFreedom, ModelKind::kVbpr};
  c.output = "out/" + std::to_string(rng.uniform_index(1000));
  c.threads = 1 + static_cast<unsigned>(rng.uniform_index(8));
  return c;
}

/// Interactions shaped like the Office dataset: 4905 users, 2420 items and
/// 53258 records, with every degree at least 5 so the 5-core keeps all.
void write_office_shaped(const fs::path& path) {
  std::ofstream out(path);
  const std::size_t users = 4905, items = 2420, records = 53258;
  std::size_t next = 0;
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t n = records / users + (u < records % users ? 1 : 0);
    for (std::size_t j = 0; j < n; ++j) out << 'u' << u << "\ti" << (next++ % items) << '\n';
  }
}

struct QuietLogs {
  QuietLogs() { log::set_level(log::Level::kQuiet); }
  ~QuietLogs() { log::set_level(log::Level::kWarn); }
};

}  // namespace

TEST_CASE("config round trip") {
  const ExperimentConfig defaults;
  CHECK(parse_config(serialize_config(defaults)) == defaults);
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_config(rng);
    const auto text = serialize_config(c);
    CHECK(parse_config(text) == c);
    CHECK(serialize_config(parse_config(text)) == text);
  }
}

TEST_CASE("config parsing rejects bad input") {
  CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ntagg = vbpr\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[model]\ntag = resnet\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[trainer]\nepochs = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[evaluation]\ncutoffs = 10,,20\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[features]\nsmell = x.bin\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nthreads = 1\nthreads = 2\n"), ConfigError);
  try {
    parse_config("[trainer]\nlearning_rate = fast\n", "exp.ini");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("exp.ini") != std::string::npos);
    CHECK(what.find("learning_rate") != std::string::npos);
  }
  const auto c = parse_config("; comment\n[model]\ntag = lattice\n[grid]\nlearning_rates = 0.1, 0.01\n");
  CHECK(c.model.kind == ModelKind::kLattice);
  CHECK(c.grid.learning_rates == std::vector<double>{0.1, 0.01});
}

TEST_CASE("config validation") {
  TempDir dir;
  auto c = small_synthetic(dir / "out");
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.cutoffs = {10, 0};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.cutoffs.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.grid.learning_rates = {1, 2, 3, 4, 5, 6};
  bad.grid.reg_weights = {0, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.roster = {ModelKind::kVbpr, ModelKind::kVbpr};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.model.dim = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(c.benchmark_roster() == std::vector{ModelKind::kVbpr});
}

TEST_CASE("missing feature file fails validation before any work") {
  TempDir dir;
  std::ofstream(dir / "ratings.tsv") << "u\ti\n";
  ExperimentConfig c;
  c.data_root = dir.path().string();
  c.interactions = "ratings.tsv";
  c.features = {{Modality::kVisual, "visual.bin"}};
  c.output = (dir / "out").string();
  try {
    cmd_prepare(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("visual.bin") != std::string::npos);
  }
  CHECK(!fs::exists(dir / "out"));
}

TEST_CASE("load_config resolves the data root") {
  TempDir dir;
  fs::create_directories(dir / "conf");
  std::ofstream(dir / "conf" / "exp.ini") << "[dataset]\nroot = ../data\ninteractions = r.tsv\n";
  ::unsetenv("MMREC_DATA_ROOT");
  auto c = load_config(dir / "conf" / "exp.ini");
  CHECK(fs::path(c.data_root) == (dir / "conf" / "../data").lexically_normal());
  CHECK(c.resolve("r.tsv") == fs::path(c.data_root) / "r.tsv");
  CHECK(c.resolve("/abs/r.tsv") == fs::path("/abs/r.tsv"));

  ::setenv("MMREC_DATA_ROOT", "/mnt/datasets", 1);
  c = load_config(dir / "conf" / "exp.ini");
  ::unsetenv("MMREC_DATA_ROOT");
  CHECK(c.data_root == "/mnt/datasets");
  CHECK_THROWS_AS(load_config(dir / "missing.ini"), ConfigError);
}

TEST_CASE("prepare on an Office-shaped fixture reports the published sparsity") {
  QuietLogs quiet;
  TempDir dir;
  write_office_shaped(dir / "office.tsv");
  std::ofstream(dir / "visual.txt") << "i0\t1\t0\n";
  ExperimentConfig c;
  c.dataset = "office";
  c.data_root = dir.path().string();
  c.interactions = "office.tsv";
  c.features = {{Modality::kVisual, "visual.txt"}};
  c.feature_format = FeatureFormat::kText;
  c.output = (dir / "out").string();
  const auto result = cmd_prepare(c);
  CHECK(result.filtered.users == 4905);
  CHECK(result.filtered.items == 2420);
  CHECK(result.filtered.interactions == 53258);
  const auto stats = nlohmann::json::parse(slurp(dir / "out" / "prepared" / "stats.json"));
  CHECK(stats["filtered"]["sparsity_percent"] == "99.55");
  CHECK(stats["split"]["total"] == 53258);
}

TEST_CASE("prepare on synthetic data reconciles split totals") {
  QuietLogs quiet;
  TempDir dir;
  const auto c = small_synthetic(dir / "out");
  const auto result = cmd_prepare(c);
  CHECK(result.train + result.validation + result.test == result.filtered.interactions);
  CHECK(result.filtered.interactions <= result.raw.interactions);
  const auto split = read_split(dir / "out" / "prepared");
  CHECK(split.train.size() == result.train);
  CHECK(fs::exists(dir / "out" / "prepared" / "source" / "visual.bin"));
  // The 2-core holds.
  std::vector<int> user_degree(split.n_users()), item_degree(split.n_items());
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& e : *part) {
      ++user_degree[e.user];
      ++item_degree[e.item];
    }
  }
  CHECK(*std::min_element(user_degree.begin(), user_degree.end()) >= 2);
  CHECK(*std::min_element(item_degree.begin(), item_degree.end()) >= 2);
}

TEST_CASE("commands need their inputs") {
  QuietLogs quiet;
  TempDir dir;
  const auto c = small_synthetic(dir / "out");
  CHECK_THROWS_AS(cmd_tune(c, ModelKind::kVbpr), ConfigError);
  cmd_prepare(c);
  CHECK_THROWS_AS(cmd_evaluate(c, ModelKind::kVbpr), ConfigError);
}

TEST_CASE("single-model benchmark writes a complete run and one row per cutoff") {
  QuietLogs quiet;
  TempDir dir;
  const auto c = small_synthetic(dir / "out");
  cmd_prepare(c);
  const auto rows = cmd_benchmark(c);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].k == 10);
  CHECK(rows[1].k == 20);
  CHECK(rows[0].model == "VBPR");
  const auto run = dir / "out" / "vbpr";
  CHECK(audit_run(run).empty());
  CHECK(fs::exists(run / "timings.json"));
  CHECK(fs::exists(run / "grid.tsv"));

  const auto tuned = nlohmann::json::parse(slurp(run / "tuned.json"));
  const auto manifest = nlohmann::json::parse(slurp(run / "manifest.json"));
  CHECK(manifest["hyperparameters"]["origin"] == "tuned");
  CHECK(manifest["hyperparameters"]["epochs"] == tuned["epochs"]);
  CHECK(manifest["hyperparameters"]["learning_rate"] == tuned["learning_rate"]);
  CHECK(parse_config(manifest["config"].get<std::string>()) == c);

  // Retraining for the selected epoch count replays the grid trial, so the
  // trace's last validation recall equals the tuned one.
  const auto trace = slurp(run / "trace.tsv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == tuned["epochs"].get<int>() + 1);
  const auto last = trace.substr(trace.rfind('\n', trace.size() - 2) + 1);
  std::istringstream fields(last);
  int epoch = 0;
  double loss = 0, recall = -1;
  fields >> epoch >> loss >> recall;
  CHECK(epoch == tuned["epochs"].get<int>());
  CHECK(recall == doctest::Approx(tuned["validation_recall_at_20"].get<double>()).epsilon(1e-6));

  const auto recs = slurp(run / "recommendations.tsv");
  CHECK(recs.rfind("user\titem\trank\tscore\n", 0) == 0);

  // Pass-through report for a single run.
  CHECK(cmd_report({run}) == slurp(run / "report.md"));

  // Auditing flags missing artifacts.
  fs::remove(run / "trace.tsv");
  CHECK(audit_run(run) == std::vector<std::string>{"trace.tsv"});
}

TEST_CASE("benchmark is byte-identical across runs") {
  QuietLogs quiet;
  TempDir dir;
  auto c = small_synthetic(dir / "out");
  c.roster = {ModelKind::kVbpr, ModelKind::kFreedom};
  auto run_once = [&] {
    fs::remove_all(dir / "out");
    cmd_prepare(c);
    cmd_benchmark(c);
    std::vector<std::string> bytes;
    for (const auto* name : {"report.md", "metrics.tsv", "prepared/train.tsv", "prepared/stats.json",
                             "vbpr/manifest.json", "vbpr/recommendations.tsv", "freedom/manifest.json",
                             "freedom/checkpoint/item.f32", "vbpr/grid.tsv"}) {
      REQUIRE(fs::exists(dir / "out" / name));
      bytes.push_back(slurp(dir / "out" / name));
    }
    return bytes;
  };
  const auto first = run_once();
  const auto second = run_once();
  CHECK(first == second);
}

TEST_CASE("full roster benchmark and report merging") {
  QuietLogs quiet;
  TempDir dir;
  auto c = small_synthetic(dir / "out");
  c.roster.assign(kAllModels.begin(), kAllModels.end());
  c.trainer.epochs = 2;
  c.eval_every = 1;
  c.grid.learning_rates = {1e-2};
  cmd_prepare(c);
  const auto rows = cmd_benchmark(c);
  CHECK(rows.size() == 12);
  const auto report = slurp(dir / "out" / "report.md");
  CHECK(report.find("| Model | Recall@10 | nDCG@10 | EFD@10 | Gini@10 | APLT@10 | iCov@10 | Recall@20 |") !=
        std::string::npos);
  std::size_t at = 0;
  for (auto kind : kAllModels) {
    const auto pos = report.find("| " + std::string(display_name(kind)) + " |");
    REQUIRE(pos != std::string::npos);
    CHECK(pos >= at);
    at = pos;
  }
  for (auto kind : kAllModels) CHECK(audit_run(dir / "out" / std::string(to_string(kind))).empty());

  // The merged report over the whole tree equals the benchmark report.
  CHECK(cmd_report({dir / "out"}) == report);
  // Two run directories merge with best-value markers across them.
  const auto two = cmd_report({dir / "out" / "vbpr", dir / "out" / "bm3"});
  CHECK(two.find("| VBPR |") < two.find("| BM3 |"));
  CHECK(two.find("**") != std::string::npos);
}

TEST_CASE("report errors") {
  TempDir dir;
  fs::create_directories(dir / "empty");
  CHECK_THROWS_AS(cmd_report({dir / "empty"}), ConfigError);
  CHECK_THROWS_AS(cmd_report({dir / "nope"}), ConfigError);
  CHECK_THROWS_AS(cmd_report({}), ConfigError);

  auto write_rows = [&](const std::string& sub, std::vector<MetricRow> rows) {
    fs::create_directories(dir / sub);
    std::ofstream out(dir / sub / "metrics.tsv");
    write_metrics_tsv(out, rows);
  };
  write_rows("a", {{"d", "VBPR", 10, 0.1, 0.1, 0.1, 0.1, 0.1, 1}, {"d", "VBPR", 20, 0.2, 0.2, 0.2, 0.2, 0.2, 2}});
  write_rows("b", {{"d", "BM3", 10, 0.3, 0.1, 0.1, 0.1, 0.1, 1}});
  CHECK_THROWS_AS(cmd_report({dir / "a", dir / "b"}), ConfigError);
  write_rows("c", {{"d", "VBPR", 10, 0.5, 0.1, 0.1, 0.1, 0.1, 1}});
  CHECK_THROWS_AS(cmd_report({dir / "a", dir / "c"}), ConfigError);
  write_rows("e", {{"d", "BM3", 10, 0.3, 0.1, 0.1, 0.1, 0.1, 1}, {"d", "BM3", 20, 0.1, 0.2, 0.2, 0.2, 0.2, 2}});
  const auto md = cmd_report({dir / "a", dir / "e"});
  CHECK(md.find("| VBPR | <u>0.1000</u>") != std::string::npos);
  CHECK(md.find("| BM3 | **0.3000**") != std::string::npos);
}
