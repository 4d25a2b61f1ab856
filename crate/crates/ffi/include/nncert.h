#ifndef NNCERT_H
#define NNCERT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a learning or verification run.
typedef enum NncertOutcome {
  NNCERT_OUTCOME_FEASIBLE = 0,
  NNCERT_OUTCOME_BUDGET_EXHAUSTED = 1,
  NNCERT_OUTCOME_CERTIFIED = 2,
  NNCERT_OUTCOME_UNKNOWN = 3,
} NncertOutcome;

// Status codes returned by every fallible function.
typedef enum NncertStatus {
  NNCERT_STATUS_OK = 0,
  NNCERT_STATUS_NULL_POINTER = 1,
  NNCERT_STATUS_INVALID_UTF8 = 2,
  NNCERT_STATUS_PARSE = 3,
  NNCERT_STATUS_DIMENSION = 4,
  NNCERT_STATUS_INVALID_ARGUMENT = 5,
  // Singular or asymmetric matrix, or a violated numerical precondition.
  NNCERT_STATUS_NUMERIC = 6,
  NNCERT_STATUS_UNSUPPORTED = 7,
  NNCERT_STATUS_SOUNDNESS_BUG = 8,
  NNCERT_STATUS_IO = 9,
  NNCERT_STATUS_PANIC = 10,
} NncertStatus;

// A feed-forward network.
typedef struct NncertNetwork NncertNetwork;

// A validated problem file.
typedef struct NncertProblem NncertProblem;

// The report of a learning or verification run.
typedef struct NncertReport NncertReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *nncert_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void nncert_string_free(char *s);

// Parse and validate a problem JSON document.
//
// # Safety
// `json` must be a nul-terminated string and `out` a valid pointer.
enum NncertStatus nncert_problem_from_json(const char *json, struct NncertProblem **out);

// Number of specification pairs.
//
// # Safety
// `problem` must be NULL or a live handle.
size_t nncert_problem_pair_count(const struct NncertProblem *problem);

// # Safety
// `problem` must be NULL or a handle not freed before.
void nncert_problem_free(struct NncertProblem *problem);

// Parse a weights JSON document.
//
// # Safety
// `json` must be a nul-terminated string and `out` a valid pointer.
enum NncertStatus nncert_network_from_json(const char *json, struct NncertNetwork **out);

// Serialize a network; free the result with [`nncert_string_free`].
//
// # Safety
// `net` must be a live handle and `out` a valid pointer.
enum NncertStatus nncert_network_to_json(const struct NncertNetwork *net, char **out);

// # Safety
// `net` must be NULL or a live handle.
size_t nncert_network_input_dim(const struct NncertNetwork *net);

// # Safety
// `net` must be NULL or a live handle.
size_t nncert_network_output_dim(const struct NncertNetwork *net);

// Evaluate the network at `x` (length `x_len`) into `y` (length `y_len`).
//
// # Safety
// `x` and `y` must point to arrays of the given lengths.
enum NncertStatus nncert_network_forward(const struct NncertNetwork *net,
                                         const double *x,
                                         size_t x_len,
                                         double *y,
                                         size_t y_len);

// # Safety
// `net` must be NULL or a handle not freed before.
void nncert_network_free(struct NncertNetwork *net);

// Learn a certified network for `problem`. A report is produced for both
// feasible and budget-exhausted runs.
//
// # Safety
// `problem` must be a live handle and `out` a valid pointer.
enum NncertStatus nncert_learn(const struct NncertProblem *problem, struct NncertReport **out);

// Verify `net` against the pairs of `problem` using its solver settings,
// sample count and seed.
//
// # Safety
// Handles must be live and `out` a valid pointer.
enum NncertStatus nncert_verify(const struct NncertNetwork *net,
                                const struct NncertProblem *problem,
                                struct NncertReport **out);

// Monte-Carlo violation counts, one per pair, written to `counts`
// (length `len`, which must equal the number of pairs).
//
// # Safety
// Handles must be live and `counts` must point to `len` elements.
enum NncertStatus nncert_monte_carlo(const struct NncertNetwork *net,
                                     const struct NncertProblem *problem,
                                     size_t samples,
                                     uint64_t seed,
                                     size_t *counts,
                                     size_t len);

// # Safety
// `report` must be a live handle.
enum NncertOutcome nncert_report_outcome(const struct NncertReport *report);

// Margin of the run, NaN for a NULL handle.
//
// # Safety
// `report` must be NULL or a live handle.
double nncert_report_margin(const struct NncertReport *report);

// Total Monte-Carlo violations over all pairs.
//
// # Safety
// `report` must be NULL or a live handle.
size_t nncert_report_violations(const struct NncertReport *report);

// The network carried by the report. Sets `*out` to NULL when the run
// produced none.
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum NncertStatus nncert_report_network(const struct NncertReport *report,
                                        struct NncertNetwork **out);

// Report as JSON; free the result with [`nncert_string_free`].
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum NncertStatus nncert_report_to_json(const struct NncertReport *report, char **out);

// # Safety
// `report` must be NULL or a handle not freed before.
void nncert_report_free(struct NncertReport *report);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* NNCERT_H */
