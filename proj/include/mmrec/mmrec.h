/* C interface to the benchmarking library. */
#ifndef MMREC_H
#define MMREC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define MMREC_API __attribute__((visibility("default")))
#else
#define MMREC_API
#endif

/* Values double as process exit codes for the CLI. */
typedef enum mmrec_status {
  MMREC_OK = 0,
  /* Bad argument, configuration or input file. */
  MMREC_E_INVALID = 1,
  /* I/O failure, numerical divergence or another runtime failure. */
  MMREC_E_RUNTIME = 2
} mmrec_status;

typedef enum mmrec_log_level { MMREC_LOG_QUIET = 0, MMREC_LOG_WARN = 1, MMREC_LOG_INFO = 2 } mmrec_log_level;

typedef struct mmrec_experiment mmrec_experiment;

typedef struct mmrec_prepare_info {
  size_t users;
  size_t items;
  size_t interactions;
  double sparsity; /* percent, after filtering */
  size_t train;
  size_t validation;
  size_t test;
} mmrec_prepare_info;

MMREC_API const char* mmrec_version(void);

/* Message of the last failed call on this thread ("" if none). */
MMREC_API const char* mmrec_last_error(void);

MMREC_API void mmrec_set_log_level(mmrec_log_level level);

/* Loads an INI experiment file. On failure *out is set to NULL. */
MMREC_API mmrec_status mmrec_experiment_load(const char* path, mmrec_experiment** out);
/* Parses INI text; relative paths resolve against the working directory. */
MMREC_API mmrec_status mmrec_experiment_parse(const char* text, mmrec_experiment** out);
MMREC_API void mmrec_experiment_free(mmrec_experiment* experiment);

/* Overrides the split and trainer seeds. */
MMREC_API mmrec_status mmrec_experiment_set_seed(mmrec_experiment* experiment, uint64_t seed);
MMREC_API mmrec_status mmrec_experiment_set_output(mmrec_experiment* experiment, const char* dir);
MMREC_API mmrec_status mmrec_experiment_set_threads(mmrec_experiment* experiment, unsigned threads);

/*
 * Text results use caller buffers: up to capacity - 1 bytes plus a NUL are
 * written, and *needed (if not NULL) receives the full length without the
 * NUL. A NULL buffer with capacity 0 only queries the length.
 */
MMREC_API mmrec_status mmrec_experiment_config(const mmrec_experiment* experiment, char* buffer, size_t capacity,
                                               size_t* needed);
MMREC_API mmrec_status mmrec_experiment_output(const mmrec_experiment* experiment, char* buffer, size_t capacity,
                                               size_t* needed);
/* Tag of the configured model ("vbpr", ...). */
MMREC_API mmrec_status mmrec_experiment_model(const mmrec_experiment* experiment, char* buffer, size_t capacity,
                                              size_t* needed);

/* info may be NULL. */
MMREC_API mmrec_status mmrec_prepare(mmrec_experiment* experiment, mmrec_prepare_info* info);
/* model_tag NULL selects the configured model. */
MMREC_API mmrec_status mmrec_tune(mmrec_experiment* experiment, const char* model_tag);
MMREC_API mmrec_status mmrec_train(mmrec_experiment* experiment, const char* model_tag);
MMREC_API mmrec_status mmrec_evaluate(mmrec_experiment* experiment, const char* model_tag);
MMREC_API mmrec_status mmrec_benchmark(mmrec_experiment* experiment);

/* Consolidated markdown over the metrics found under the directories. */
MMREC_API mmrec_status mmrec_report(const char* const* dirs, size_t count, char* buffer, size_t capacity,
                                    size_t* needed);

/* Newline-separated missing artifacts of a run directory; *missing gets the count. */
MMREC_API mmrec_status mmrec_audit(const char* run_dir, size_t* missing, char* buffer, size_t capacity,
                                   size_t* needed);

/* Sparsity in percent of a users x items matrix with the given entries. */
MMREC_API mmrec_status mmrec_sparsity(size_t users, size_t items, size_t interactions, double* out);

#ifdef __cplusplus
}
#endif

#endif
