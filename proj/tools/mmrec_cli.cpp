// Command-line front end. Talks to the library only through mmrec.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmrec/mmrec.h"

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 0;
  bool quiet = false;
  bool verbose = false;
  std::string model;
  std::vector<std::string> dirs;
  std::string run_dir;
};

using Handle = std::unique_ptr<mmrec_experiment, decltype(&mmrec_experiment_free)>;

int fail(mmrec_status status) {
  std::cerr << "mmrec: " << mmrec_last_error() << '\n';
  return status;
}

/// Runs a text-returning call twice: once for the size, once for the bytes.
template <typename F>
mmrec_status fetch(std::string& text, F&& call) {
  std::size_t needed = 0;
  if (auto s = call(nullptr, 0, &needed); s != MMREC_OK) return s;
  std::vector<char> buf(needed + 1);
  if (auto s = call(buf.data(), buf.size(), &needed); s != MMREC_OK) return s;
  text.assign(buf.data(), needed);
  return MMREC_OK;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Loads the config and applies the global overrides.
mmrec_status open_experiment(const Options& o, Handle& handle) {
  if (o.config.empty()) {
    std::cerr << "mmrec: --config is required for this command\n";
    return MMREC_E_INVALID;
  }
  mmrec_experiment* raw = nullptr;
  if (auto s = mmrec_experiment_load(o.config.c_str(), &raw); s != MMREC_OK) return s;
  handle.reset(raw);
  if (o.seed) {
    if (auto s = mmrec_experiment_set_seed(raw, *o.seed); s != MMREC_OK) return s;
  }
  if (!o.out.empty()) {
    if (auto s = mmrec_experiment_set_output(raw, o.out.c_str()); s != MMREC_OK) return s;
  }
  if (o.threads > 0) {
    if (auto s = mmrec_experiment_set_threads(raw, o.threads); s != MMREC_OK) return s;
  }
  return MMREC_OK;
}

std::string output_dir(const mmrec_experiment* e) {
  std::string dir;
  fetch(dir, [&](char* b, std::size_t c, std::size_t* n) { return mmrec_experiment_output(e, b, c, n); });
  return dir;
}

const char* tag_or_null(const Options& o) { return o.model.empty() ? nullptr : o.model.c_str(); }

int run_prepare(const Options& o) {
  Handle e(nullptr, mmrec_experiment_free);
  if (auto s = open_experiment(o, e); s != MMREC_OK) return fail(s);
  mmrec_prepare_info info{};
  if (auto s = mmrec_prepare(e.get(), &info); s != MMREC_OK) return fail(s);
  std::printf("users %zu\nitems %zu\ninteractions %zu\nsparsity %.2f%%\ntrain %zu\nvalidation %zu\ntest %zu\n",
              info.users, info.items, info.interactions, info.sparsity, info.train, info.validation, info.test);
  return 0;
}

int run_model_step(const Options& o, mmrec_status (*step)(mmrec_experiment*, const char*), bool print_report) {
  Handle e(nullptr, mmrec_experiment_free);
  if (auto s = open_experiment(o, e); s != MMREC_OK) return fail(s);
  if (auto s = step(e.get(), tag_or_null(o)); s != MMREC_OK) return fail(s);
  if (print_report) {
    std::string tag = o.model;
    if (tag.empty()) {
      fetch(tag, [&](char* b, std::size_t c, std::size_t* n) { return mmrec_experiment_model(e.get(), b, c, n); });
    }
    std::cout << read_file(std::filesystem::path(output_dir(e.get())) / tag / "report.md");
  }
  return 0;
}

int run_benchmark(const Options& o) {
  Handle e(nullptr, mmrec_experiment_free);
  if (auto s = open_experiment(o, e); s != MMREC_OK) return fail(s);
  if (auto s = mmrec_benchmark(e.get()); s != MMREC_OK) return fail(s);
  std::cout << read_file(std::filesystem::path(output_dir(e.get())) / "report.md");
  return 0;
}

int run_report(const Options& o) {
  std::vector<const char*> dirs;
  for (const auto& d : o.dirs) dirs.push_back(d.c_str());
  std::string text;
  const auto s = fetch(text, [&](char* b, std::size_t c, std::size_t* n) {
    return mmrec_report(dirs.data(), dirs.size(), b, c, n);
  });
  if (s != MMREC_OK) return fail(s);
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    std::ofstream(std::filesystem::path(o.out) / "report.md", std::ios::binary) << text;
  }
  std::cout << text;
  return 0;
}

int run_audit(const Options& o) {
  std::size_t missing = 0;
  std::string text;
  const auto s = fetch(text, [&](char* b, std::size_t c, std::size_t* n) {
    return mmrec_audit(o.run_dir.c_str(), &missing, b, c, n);
  });
  if (s != MMREC_OK) return fail(s);
  if (missing == 0) {
    std::cout << "complete\n";
    return 0;
  }
  std::cout << "missing:\n" << text;
  return MMREC_E_INVALID;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal recommendation benchmark"};
  app.set_version_flag("--version", std::string(mmrec_version()));
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Experiment file (INI)");
  app.add_option("--seed", o.seed, "Overrides the split and trainer seeds");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--threads", o.threads, "Worker threads (1 = deterministic)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", o.quiet, "Suppress warnings");
  app.add_flag("-v,--verbose", o.verbose, "Progress messages");

  auto* prepare = app.add_subcommand("prepare", "Filter and split the dataset");
  auto* tune = app.add_subcommand("tune", "Grid search on the validation split");
  auto* train = app.add_subcommand("train", "Fit with the selected hyperparameters");
  auto* evaluate = app.add_subcommand("evaluate", "Rank the test users and compute metrics");
  for (auto* sub : {tune, train, evaluate}) sub->add_option("--model", o.model, "Model tag (default: config)");
  auto* benchmark = app.add_subcommand("benchmark", "tune, train and evaluate every roster model");
  auto* report = app.add_subcommand("report", "Merge metrics of finished runs into one table");
  report->add_option("dirs", o.dirs, "Run or output directories")->required();
  auto* audit = app.add_subcommand("audit", "Check a run directory for missing artifacts");
  audit->add_option("run_dir", o.run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : MMREC_E_INVALID;
  }

  mmrec_set_log_level(o.quiet ? MMREC_LOG_QUIET : o.verbose ? MMREC_LOG_INFO : MMREC_LOG_WARN);
  if (*prepare) return run_prepare(o);
  if (*tune) return run_model_step(o, mmrec_tune, false);
  if (*train) return run_model_step(o, mmrec_train, false);
  if (*evaluate) return run_model_step(o, mmrec_evaluate, true);
  if (*benchmark) return run_benchmark(o);
  if (*report) return run_report(o);
  if (*audit) return run_audit(o);
  return MMREC_E_INVALID;
}
