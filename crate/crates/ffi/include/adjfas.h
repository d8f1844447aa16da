#ifndef ADJFAS_H
#define ADJFAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// `max_subset_size` value meaning "no cap"; any negative value works.
#define ADJFAS_NO_SUBSET_LIMIT -1

typedef enum AdjfasStatus {
  ADJFAS_STATUS_OK = 0,
  ADJFAS_STATUS_ERR_INTERNAL = 1,
  ADJFAS_STATUS_ERR_VALIDATION = 2,
  ADJFAS_STATUS_ERR_INFEASIBLE = 3,
  ADJFAS_STATUS_ERR_ENUMERATION = 4,
  ADJFAS_STATUS_ERR_NULL_POINTER = 5,
  ADJFAS_STATUS_ERR_IO = 6,
  ADJFAS_STATUS_ERR_PANIC = 7,
} AdjfasStatus;

// Experimental summary.
typedef struct AdjfasExperiment AdjfasExperiment;

// Outcome of a search.
typedef struct AdjfasResult AdjfasResult;

// Observational table.
typedef struct AdjfasTable AdjfasTable;

// Search settings. Start from [`adjfas_config_default`].
typedef struct AdjfasConfig {
  double alpha;
  size_t niters;
  double ess;
  uint64_t seed;
  // Largest subset size to score, or `ADJFAS_NO_SUBSET_LIMIT`.
  int64_t max_subset_size;
  size_t max_parents;
  size_t restarts;
  double selection_tol;
} AdjfasConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Borrowed until
// the next call on this thread.
const char *adjfas_last_error_message(void);

// Library version as a static string.
const char *adjfas_version(void);

struct AdjfasConfig adjfas_config_default(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AdjfasStatus adjfas_table_load_csv(const char *path, struct AdjfasTable **out);

// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum AdjfasStatus adjfas_table_parse_csv(const char *text, struct AdjfasTable **out);

// Number of rows, or 0 for NULL.
//
// # Safety
// `table` must be NULL or a live table handle.
size_t adjfas_table_rows(const struct AdjfasTable *table);

// Number of columns, or 0 for NULL.
//
// # Safety
// `table` must be NULL or a live table handle.
size_t adjfas_table_columns(const struct AdjfasTable *table);

// # Safety
// `table` must be NULL or a handle from this library not yet freed.
void adjfas_table_free(struct AdjfasTable *table);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AdjfasStatus adjfas_experiment_load_json(const char *path, struct AdjfasExperiment **out);

// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum AdjfasStatus adjfas_experiment_parse_json(const char *text, struct AdjfasExperiment **out);

// # Safety
// `exp` must be NULL or a handle from this library not yet freed.
void adjfas_experiment_free(struct AdjfasExperiment *exp);

// Runs the search, honoring the experiment's population flag. A NULL
// `config` uses the defaults.
//
// # Safety
// `table` and `exp` must be live handles; `config` NULL or valid; `out` a
// valid pointer.
enum AdjfasStatus adjfas_find(const struct AdjfasTable *table,
                              const struct AdjfasExperiment *exp,
                              const struct AdjfasConfig *config,
                              struct AdjfasResult **out);

// # Safety
// `result` must be NULL or a handle from this library not yet freed.
void adjfas_result_free(struct AdjfasResult *result);

// 1 if the best hypothesis is "no adjustment set exists", 0 if it is a set,
// -1 for NULL.
//
// # Safety
// `result` must be NULL or a live result handle.
int32_t adjfas_result_is_not_exists(const struct AdjfasResult *result);

// Size of the selected set (0 for the empty set, "no set", or NULL).
//
// # Safety
// `result` must be NULL or a live result handle.
size_t adjfas_result_set_len(const struct AdjfasResult *result);

// Name of the `i`-th member of the selected set, or NULL when out of range.
// Borrowed from `result`.
//
// # Safety
// `result` must be NULL or a live result handle.
const char *adjfas_result_set_var(const struct AdjfasResult *result, size_t i);

// Number of arms with an estimate (0 when none is available).
//
// # Safety
// `result` must be NULL or a live result handle.
size_t adjfas_result_estimate_arms(const struct AdjfasResult *result);

// Whether the estimate comes from adjustment (0), the trial arms (1), or is
// unavailable (2); -1 for NULL.
//
// # Safety
// `result` must be NULL or a live result handle.
int32_t adjfas_result_estimate_source(const struct AdjfasResult *result);

// Copies `P(Y | do(X = x))` into `buf`. `*written` receives the number of
// outcome categories; when `len` is too small nothing is copied and the call
// fails with a validation status.
//
// # Safety
// `result` must be a live handle, `buf` valid for `len` doubles, `written`
// a valid pointer.
enum AdjfasStatus adjfas_result_estimate(const struct AdjfasResult *result,
                                         uint32_t x,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

// Full result as JSON. Release with [`adjfas_string_free`].
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum AdjfasStatus adjfas_result_to_json(const struct AdjfasResult *result, char **out);

// # Safety
// `s` must be NULL or a string returned by this library not yet freed.
void adjfas_string_free(char *s);

// Log probability of an arm's outcome counts under the "no adjustment set"
// hypothesis. NaN for a NULL pointer with nonzero `len`.
//
// # Safety
// `counts` must be valid for `len` values.
double adjfas_score_not_exists(const uint64_t *counts, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADJFAS_H */
