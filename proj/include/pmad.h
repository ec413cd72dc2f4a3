/* pmad — patch-based memory-augmented anomaly detection for univariate
 * time series. C interface over the C++ core: opaque handles, integer
 * status codes, no exceptions or C++ types across the boundary.
 *
 * Thread safety: handles are not synchronized; use one handle per thread
 * or guard externally. pmad_last_error() is per-thread.
 */
#ifndef PMAD_H
#define PMAD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Run commands use them directly as process exit codes. */
#define PMAD_OK 0           /* success */
#define PMAD_ERR_INVALID 1  /* bad arguments, config, or input data */
#define PMAD_ERR_RUNTIME 2  /* I/O failure, divergence, internal error */

/* Message for the most recent failing call on this thread; empty string if
 * none. The pointer stays valid until the next failing call on the same
 * thread. */
const char* pmad_last_error(void);

const char* pmad_version(void);

/* ---- run configuration ------------------------------------------------- */

/* Mutable key/value run configuration; starts at built-in defaults.
 * Later assignments win, so load a file first and apply flag overrides
 * after. Keys and value syntax match the config-file format. */
typedef struct pmad_config pmad_config;

pmad_config* pmad_config_new(void);
void pmad_config_free(pmad_config* cfg);

/* Merges `key = value` lines from a file (# comments allowed). */
int pmad_config_load_file(pmad_config* cfg, const char* path);

/* Sets one key. Unknown keys and malformed values fail with
 * PMAD_ERR_INVALID and leave the config unchanged. */
int pmad_config_set(pmad_config* cfg, const char* key, const char* value);

/* Fully resolved config, one `key = value` line per key, parseable by
 * pmad_config_load_file. Caller frees with pmad_string_free. */
char* pmad_config_render(const pmad_config* cfg);

void pmad_string_free(char* s);

/* ---- commands ----------------------------------------------------------
 * Each command writes its artifacts plus config_resolved.txt into the
 * configured output directory and returns a status code. */

/* Generates the bundled 3-domain x 4-series synthetic corpus. */
int pmad_run_synth(uint64_t seed, const char* out_dir);

/* Trains per the config: one checkpoint (multi_domain) or one per series
 * (per_dataset), with training logs and effective train sizes. */
int pmad_run_train(const pmad_config* cfg);

/* Scores the configured corpus with a checkpoint; writes report.csv,
 * scores.csv and (for memory models) heatmap.csv. Explicitly configured
 * architecture keys must match the checkpoint. */
int pmad_run_eval(const pmad_config* cfg, const char* checkpoint);

/* Trains and evaluates every (encoder, strategy) cell; writes ablate.csv.
 * Encoders: "scratch" | "pretrained". */
int pmad_run_ablate(const pmad_config* cfg, const char* const* encoders, size_t n_encoders,
                    const char* const* strategies, size_t n_strategies);

/* Grid over training ratio x K x strategy; writes sweep.csv with the ratio
 * column ascending. */
int pmad_run_sweep(const pmad_config* cfg, const double* ratios, size_t n_ratios,
                   const int* k_values, size_t n_k, const char* const* strategies,
                   size_t n_strategies);

/* Leave-one-domain-out evaluation; writes loo_report.csv and, when
 * compare_baseline is nonzero, loo_baseline_report.csv. */
int pmad_run_loo(const pmad_config* cfg, int compare_baseline);

/* Efficiency comparison of {multi-domain, per-dataset} x {memory, none};
 * writes bench.csv. */
int pmad_run_bench(const pmad_config* cfg);

/* ---- direct model access ------------------------------------------------ */

typedef struct pmad_model pmad_model;

/* Loads a checkpoint written by pmad_run_train. NULL on failure (see
 * pmad_last_error). */
pmad_model* pmad_model_load(const char* checkpoint);
void pmad_model_free(pmad_model* model);

int pmad_model_window(const pmad_model* model);
int pmad_model_patch_len(const pmad_model* model);
/* 0 for models trained without the memory module. */
int pmad_model_mem_items(const pmad_model* model);
int pmad_model_domain_count(const pmad_model* model);
/* "dataset/subdomain" label of training domain id; NULL if out of range.
 * Caller frees with pmad_string_free. */
char* pmad_model_domain_label(const pmad_model* model, int id);

/* Scores `n` points as one test region: per-point reconstruction error in
 * standardized space, higher = more anomalous. scores[i] receives the
 * error; excluded[i] (optional, may be NULL) is set to 1 where no window
 * covers the point (its score is 0). dataset/subdomain route forced-item
 * strategies; unknown or NULL labels fall back to data-driven selection. */
int pmad_model_score(const pmad_model* model, const char* dataset, const char* subdomain,
                     const double* values, size_t n, double* scores, int* excluded);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PMAD_H */
