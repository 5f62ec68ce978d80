#ifndef UDALAB_H
#define UDALAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UdalabStatus {
  UDALAB_STATUS_OK = 0,
  UDALAB_STATUS_NULL_POINTER = 1,
  UDALAB_STATUS_INVALID_UTF8 = 2,
  UDALAB_STATUS_CONFIG = 3,
  UDALAB_STATUS_RUNTIME = 4,
  UDALAB_STATUS_PANIC = 5,
} UdalabStatus;

// Parsed run configuration (corpus plus experiment).
typedef struct UdalabConfig UdalabConfig;

// Result of a completed training run.
typedef struct UdalabReport UdalabReport;

typedef struct UdalabMetrics {
  double map;
  double rank1;
  double rank5;
  double rank10;
} UdalabMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *udalab_version(void);

// Message for the last failed call on this thread, or NULL. Valid until
// the next call into the library from the same thread.
const char *udalab_last_error_message(void);

// Configuration with every value at its default.
struct UdalabConfig *udalab_config_new(void);

// Parses flat `key=value` text into a new configuration.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum UdalabStatus udalab_config_parse(const char *text, struct UdalabConfig **out);

// Sets one key, with the same syntax as a config file line.
//
// # Safety
// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
enum UdalabStatus udalab_config_set(struct UdalabConfig *cfg, const char *key, const char *value);

// Serializes the configuration; free the result with `udalab_string_free`.
//
// # Safety
// `cfg` must come from this library and `out` must be valid.
enum UdalabStatus udalab_config_to_text(const struct UdalabConfig *cfg, char **out);

// # Safety
// `cfg` must come from this library or be NULL.
void udalab_config_free(struct UdalabConfig *cfg);

// Builds the corpus described by `cfg` and trains on it.
//
// # Safety
// `cfg` must come from this library and `out` must be valid.
enum UdalabStatus udalab_run(const struct UdalabConfig *cfg, struct UdalabReport **out);

// # Safety
// `report` must come from this library and `out` must be valid.
enum UdalabStatus udalab_report_metrics(const struct UdalabReport *report,
                                        struct UdalabMetrics *out);

// Final clustering error rate of the report, NaN when the final clustering
// found no cluster.
//
// # Safety
// `report` must come from this library and `out` must be valid.
enum UdalabStatus udalab_report_clustering_error(const struct UdalabReport *report, double *out);

// The report as JSON; free the result with `udalab_string_free`.
//
// # Safety
// `report` must come from this library and `out` must be valid.
enum UdalabStatus udalab_report_json(const struct UdalabReport *report, char **out);

// # Safety
// `report` must come from this library or be NULL.
void udalab_report_free(struct UdalabReport *report);

// # Safety
// `s` must be a string returned by this library or NULL.
void udalab_string_free(char *s);

// Average precision of one ranked list; nonzero bytes mark relevant items.
//
// # Safety
// `relevance` must point to `len` bytes (may be NULL when `len` is 0).
enum UdalabStatus udalab_average_precision(const uint8_t *relevance, size_t len, double *out);

// DBSCAN over a row-major `n`×`n` distance matrix. Writes one label per
// point into `labels` (-1 for outliers) and the cluster count.
//
// # Safety
// `distances` must hold `n*n` values and `labels` room for `n`.
enum UdalabStatus udalab_dbscan(const double *distances,
                                size_t n,
                                double eps,
                                size_t min_pts,
                                int64_t *labels,
                                size_t *num_clusters);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UDALAB_H */
