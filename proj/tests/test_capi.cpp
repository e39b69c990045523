// Exercises the shared library through mmrec.h only, plus the CLI exit codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mmrec/mmrec.h"
#include "support/tempdir.hpp"

namespace fs = std::filesystem;
using mmrec::testing::TempDir;

namespace {

const char* kConfig = R"([dataset]
name = tiny
source = synthetic

[synthetic]
users = 30
items = 60
visual_dim = 8
density = 0.2
seed = 3

[preprocess]
k_core = 2

[model]
tag = vbpr
dim = 8
knn = 5

[trainer]
epochs = 4
batch_size = 64

[grid]
learning_rates = 0.001, 0.01
reg_weights = 0.00001
eval_every = 2

[benchmark]
roster = vbpr, freedom
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MMREC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

struct Experiment {
  mmrec_experiment* e = nullptr;
  ~Experiment() { mmrec_experiment_free(e); }
};

}  // namespace

TEST_CASE("status codes and last error") {
  CHECK(std::string(mmrec_version()).size() > 0);
  mmrec_experiment* e = reinterpret_cast<mmrec_experiment*>(0x1);
  CHECK(mmrec_experiment_parse("[dataset]\nbogus = 1\n", &e) == MMREC_E_INVALID);
  CHECK(e == nullptr);
  CHECK(std::string(mmrec_last_error()).find("bogus") != std::string::npos);
  CHECK(mmrec_experiment_load("/nonexistent/x.ini", &e) == MMREC_E_INVALID);
  CHECK(mmrec_experiment_parse(nullptr, &e) == MMREC_E_INVALID);
  CHECK(mmrec_experiment_set_seed(nullptr, 1) == MMREC_E_INVALID);

  double s = 0;
  CHECK(mmrec_sparsity(10, 10, 5, &s) == MMREC_OK);
  CHECK(std::string(mmrec_last_error()).empty());
  CHECK(s == doctest::Approx(95.0));
  CHECK(mmrec_sparsity(10, 10, 5, nullptr) == MMREC_E_INVALID);
  mmrec_experiment_free(nullptr);
}

TEST_CASE("buffer protocol") {
  Experiment x;
  REQUIRE(mmrec_experiment_parse(kConfig, &x.e) == MMREC_OK);
  size_t needed = 0;
  REQUIRE(mmrec_experiment_model(x.e, nullptr, 0, &needed) == MMREC_OK);
  CHECK(needed == 4);
  char small[3] = {'x', 'x', 'x'};
  REQUIRE(mmrec_experiment_model(x.e, small, sizeof small, &needed) == MMREC_OK);
  CHECK(std::string(small) == "vb");
  char full[5];
  REQUIRE(mmrec_experiment_model(x.e, full, sizeof full, nullptr) == MMREC_OK);
  CHECK(std::string(full) == "vbpr");
  CHECK(mmrec_experiment_model(x.e, nullptr, 8, &needed) == MMREC_E_INVALID);

  REQUIRE(mmrec_experiment_config(x.e, nullptr, 0, &needed) == MMREC_OK);
  std::vector<char> text(needed + 1);
  REQUIRE(mmrec_experiment_config(x.e, text.data(), text.size(), &needed) == MMREC_OK);
  Experiment y;
  REQUIRE(mmrec_experiment_parse(text.data(), &y.e) == MMREC_OK);
  std::vector<char> again(needed + 1);
  REQUIRE(mmrec_experiment_config(y.e, again.data(), again.size(), nullptr) == MMREC_OK);
  CHECK(std::string(text.data()) == std::string(again.data()));

  CHECK(mmrec_experiment_set_threads(x.e, 0) == MMREC_E_INVALID);
  CHECK(mmrec_experiment_set_output(x.e, "") == MMREC_E_INVALID);
}

TEST_CASE("prepare and benchmark through the C API") {
  TempDir dir;
  Experiment x;
  REQUIRE(mmrec_experiment_parse(kConfig, &x.e) == MMREC_OK);
  REQUIRE(mmrec_experiment_set_output(x.e, (dir / "out").c_str()) == MMREC_OK);
  mmrec_prepare_info info{};
  REQUIRE(mmrec_prepare(x.e, &info) == MMREC_OK);
  CHECK(info.users > 0);
  CHECK(info.train + info.validation + info.test == info.interactions);
  CHECK(info.sparsity > 0.0);
  CHECK(info.sparsity < 100.0);

  CHECK(mmrec_tune(x.e, "nosuchmodel") == MMREC_E_INVALID);
  CHECK(mmrec_evaluate(x.e, "lattice") != MMREC_OK);

  REQUIRE(mmrec_benchmark(x.e) == MMREC_OK);
  for (const char* tag : {"vbpr", "freedom"}) {
    const auto run = (dir / "out" / tag).string();
    size_t missing = 99;
    size_t needed = 0;
    REQUIRE(mmrec_audit(run.c_str(), &missing, nullptr, 0, &needed) == MMREC_OK);
    CHECK(missing == 0);
    CHECK(needed == 0);
  }
  size_t missing = 0;
  REQUIRE(mmrec_audit(dir.path().c_str(), &missing, nullptr, 0, nullptr) == MMREC_OK);
  CHECK(missing > 0);

  const std::string root = (dir / "out").string();
  const char* dirs[] = {root.c_str()};
  size_t needed = 0;
  REQUIRE(mmrec_report(dirs, 1, nullptr, 0, &needed) == MMREC_OK);
  std::vector<char> report(needed + 1);
  REQUIRE(mmrec_report(dirs, 1, report.data(), report.size(), nullptr) == MMREC_OK);
  CHECK(std::string(report.data()) == read_file(dir / "out" / "report.md"));
  CHECK(std::string(report.data()).find("| FREEDOM |") != std::string::npos);
}

TEST_CASE("cli exit codes") {
  TempDir dir;
  const auto log = dir / "log.txt";
  CHECK(run_cli("--help", log) == 0);
  CHECK(run_cli("--version", log) == 0);
  CHECK(read_file(log).find(mmrec_version()) != std::string::npos);
  CHECK(run_cli("", log) == MMREC_E_INVALID);
  CHECK(run_cli("frobnicate", log) == MMREC_E_INVALID);
  CHECK(run_cli("--config " + (dir / "missing.ini").string() + " prepare", log) == MMREC_E_INVALID);
  CHECK(run_cli("prepare", log) == MMREC_E_INVALID);

  std::ofstream(dir / "bad.ini") << "[model]\ndim = zero\n";
  CHECK(run_cli("--config " + (dir / "bad.ini").string() + " prepare", log) == MMREC_E_INVALID);
  CHECK(read_file(log).find("mmrec:") != std::string::npos);

  // Output location sits under a regular file: an I/O failure at run time.
  std::ofstream(dir / "tiny.ini") << kConfig;
  std::ofstream(dir / "blocker") << "x";
  const int io = run_cli("--config " + (dir / "tiny.ini").string() + " --out " + (dir / "blocker" / "o").string() +
                             " -q prepare",
                         log);
  CHECK(io == MMREC_E_RUNTIME);

  const auto cfg = dir / "tiny.ini";
  const auto out = (dir / "cli").string();
  REQUIRE(run_cli("--config " + cfg.string() + " --out " + out + " -q prepare", log) == 0);
  CHECK(read_file(log).find("sparsity") != std::string::npos);
  CHECK(run_cli("--config " + cfg.string() + " --out " + out + " -q evaluate", log) != 0);
  REQUIRE(run_cli("--config " + cfg.string() + " --out " + out + " -q tune --model vbpr", log) == 0);
  REQUIRE(run_cli("--config " + cfg.string() + " --out " + out + " -q train", log) == 0);
  REQUIRE(run_cli("--config " + cfg.string() + " --out " + out + " -q evaluate", log) == 0);
  CHECK(read_file(log).find("| VBPR |") != std::string::npos);
  CHECK(run_cli("audit " + out + "/vbpr", log) == 0);
  CHECK(run_cli("audit " + out, log) == MMREC_E_INVALID);
  CHECK(run_cli("--out " + (dir / "merged").string() + " report " + out, log) == 0);
  CHECK(fs::exists(dir / "merged" / "report.md"));
  CHECK(run_cli("report " + (dir / "nothing").string(), log) != 0);
}
