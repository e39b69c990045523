#include "mmrec/mmrec.h"

#include <cstring>
#include <string>
#include <vector>

#include "mmrec/experiment.hpp"
#include "mmrec/log.hpp"

struct mmrec_experiment {
  mmrec::ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
mmrec_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return MMREC_OK;
  } catch (const mmrec::ParseError& e) {
    g_last_error = e.what();
    return MMREC_E_INVALID;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return MMREC_E_INVALID;
  } catch (const std::out_of_range& e) {
    g_last_error = e.what();
    return MMREC_E_INVALID;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MMREC_E_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return MMREC_E_RUNTIME;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw std::invalid_argument(std::string(what) + " is NULL");
}

void copy_out(const std::string& text, char* buffer, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = text.size();
  if (capacity == 0) return;
  require(buffer, "buffer");
  const auto n = std::min(text.size(), capacity - 1);
  std::memcpy(buffer, text.data(), n);
  buffer[n] = '\0';
}

mmrec::ModelKind kind_of(const mmrec_experiment* e, const char* tag) {
  return tag ? mmrec::parse_model_kind(tag) : e->config.model.kind;
}

}  // namespace

extern "C" {

const char* mmrec_version(void) { return MMREC_VERSION; }

const char* mmrec_last_error(void) { return g_last_error.c_str(); }

void mmrec_set_log_level(mmrec_log_level level) {
  switch (level) {
    case MMREC_LOG_QUIET: mmrec::log::set_level(mmrec::log::Level::kQuiet); break;
    case MMREC_LOG_WARN: mmrec::log::set_level(mmrec::log::Level::kWarn); break;
    case MMREC_LOG_INFO: mmrec::log::set_level(mmrec::log::Level::kInfo); break;
  }
}

mmrec_status mmrec_experiment_load(const char* path, mmrec_experiment** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new mmrec_experiment{mmrec::load_config(path)};
  });
}

mmrec_status mmrec_experiment_parse(const char* text, mmrec_experiment** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new mmrec_experiment{mmrec::parse_config(text)};
  });
}

void mmrec_experiment_free(mmrec_experiment* experiment) { delete experiment; }

mmrec_status mmrec_experiment_set_seed(mmrec_experiment* e, uint64_t seed) {
  return guarded([&] {
    require(e, "experiment");
    e->config.set_seed(seed);
  });
}

mmrec_status mmrec_experiment_set_output(mmrec_experiment* e, const char* dir) {
  return guarded([&] {
    require(e, "experiment");
    require(dir, "dir");
    if (!*dir) throw std::invalid_argument("output directory is empty");
    e->config.output = dir;
  });
}

mmrec_status mmrec_experiment_set_threads(mmrec_experiment* e, unsigned threads) {
  return guarded([&] {
    require(e, "experiment");
    if (threads < 1) throw std::invalid_argument("threads must be at least 1");
    e->config.threads = threads;
  });
}

mmrec_status mmrec_experiment_config(const mmrec_experiment* e, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(e, "experiment");
    copy_out(mmrec::serialize_config(e->config), buffer, capacity, needed);
  });
}

mmrec_status mmrec_experiment_output(const mmrec_experiment* e, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(e, "experiment");
    copy_out(e->config.output, buffer, capacity, needed);
  });
}

mmrec_status mmrec_experiment_model(const mmrec_experiment* e, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(e, "experiment");
    copy_out(std::string(mmrec::to_string(e->config.model.kind)), buffer, capacity, needed);
  });
}

mmrec_status mmrec_prepare(mmrec_experiment* e, mmrec_prepare_info* info) {
  return guarded([&] {
    require(e, "experiment");
    const auto r = mmrec::cmd_prepare(e->config);
    if (info) {
      info->users = r.filtered.users;
      info->items = r.filtered.items;
      info->interactions = r.filtered.interactions;
      info->sparsity = r.filtered.sparsity;
      info->train = r.train;
      info->validation = r.validation;
      info->test = r.test;
    }
  });
}

mmrec_status mmrec_tune(mmrec_experiment* e, const char* model_tag) {
  return guarded([&] {
    require(e, "experiment");
    mmrec::cmd_tune(e->config, kind_of(e, model_tag));
  });
}

mmrec_status mmrec_train(mmrec_experiment* e, const char* model_tag) {
  return guarded([&] {
    require(e, "experiment");
    mmrec::cmd_train(e->config, kind_of(e, model_tag));
  });
}

mmrec_status mmrec_evaluate(mmrec_experiment* e, const char* model_tag) {
  return guarded([&] {
    require(e, "experiment");
    mmrec::cmd_evaluate(e->config, kind_of(e, model_tag));
  });
}

mmrec_status mmrec_benchmark(mmrec_experiment* e) {
  return guarded([&] {
    require(e, "experiment");
    mmrec::cmd_benchmark(e->config);
  });
}

mmrec_status mmrec_report(const char* const* dirs, size_t count, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    if (count > 0) require(dirs, "dirs");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < count; ++i) {
      require(dirs[i], "directory");
      paths.emplace_back(dirs[i]);
    }
    copy_out(mmrec::cmd_report(paths), buffer, capacity, needed);
  });
}

mmrec_status mmrec_audit(const char* run_dir, size_t* missing, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(run_dir, "run_dir");
    const auto names = mmrec::audit_run(run_dir);
    if (missing) *missing = names.size();
    std::string text;
    for (const auto& n : names) text += n + "\n";
    copy_out(text, buffer, capacity, needed);
  });
}

mmrec_status mmrec_sparsity(size_t users, size_t items, size_t interactions, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = mmrec::stats(users, items, interactions).sparsity;
  });
}

}  // extern "C"
