#ifndef FAIRMC_H
#define FAIRMC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Verification result codes for [`fm_report_verdict`].
 */
#define FM_VERDICT_PASS 0

#define FM_VERDICT_FAIL 1

typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_UTF8 = 2,
  FM_STATUS_IO = 3,
  FM_STATUS_PARSE = 4,
  FM_STATUS_INVALID_MODEL = 5,
  FM_STATUS_INVALID_ARGUMENT = 6,
  FM_STATUS_INVALID_CONFIG = 7,
  FM_STATUS_NON_CONVERGENCE = 8,
  FM_STATUS_BUFFER_TOO_SMALL = 9,
  FM_STATUS_PANIC = 10,
} FmStatus;

/*
 A chain read from the text format.
 */
typedef struct FmDtmc FmDtmc;

/*
 A loaded network.
 */
typedef struct FmNetwork FmNetwork;

/*
 The report of a verify or repair run.
 */
typedef struct FmReport FmReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next failing call on the same thread.
 */
const char *fm_last_error(void);

/*
 # Safety
 `s` must be null or a string returned by this library, freed once.
 */
void fm_string_free(char *s);

/*
 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FmStatus fm_network_load(const char *path, struct FmNetwork **out);

/*
 # Safety
 `net` must be null or a handle from [`fm_network_load`], freed once.
 */
void fm_network_free(struct FmNetwork *net);

/*
 Number of input values the network expects, or 0 for a null handle.

 # Safety
 `net` must be null or a live handle.
 */
size_t fm_network_input_width(const struct FmNetwork *net);

/*
 Runs the network on `input` and writes the raw outputs to `output`.
 `written` receives the output count; when `capacity` is too small the
 call fails with `BufferTooSmall` and `written` holds the needed size.

 # Safety
 `input` must point to `len` doubles and `output` to `capacity` doubles.
 */
enum FmStatus fm_network_forward(const struct FmNetwork *net,
                                 const double *input,
                                 size_t len,
                                 double *output,
                                 size_t capacity,
                                 size_t *written);

/*
 # Safety
 `input` must point to `len` doubles; `label` must be writable.
 */
enum FmStatus fm_network_predict(const struct FmNetwork *net,
                                 const double *input,
                                 size_t len,
                                 size_t *label);

/*
 Runs verification (`repair` = 0) or verification plus repair (`repair`
 != 0) from a JSON run config, writing artifacts to `out_dir`. The process
 exit code the command-line tool would use is stored in `exit_code`.

 # Safety
 String arguments must be NUL-terminated; `out` and `exit_code` writable.
 */
enum FmStatus fm_run(const char *config_path,
                     int32_t repair,
                     const char *out_dir,
                     struct FmReport **out,
                     int32_t *exit_code);

/*
 # Safety
 `report` must be null or a handle from [`fm_run`], freed once.
 */
void fm_report_free(struct FmReport *report);

/*
 [`FM_VERDICT_PASS`] or [`FM_VERDICT_FAIL`] for the original network, -1
 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
int32_t fm_report_verdict(const struct FmReport *report);

/*
 # Safety
 `report` must be null or a live handle.
 */
int32_t fm_report_exit_code(const struct FmReport *report);

/*
 Largest group difference, NaN for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
double fm_report_max_diff(const struct FmReport *report);

/*
 # Safety
 `report` must be null or a live handle.
 */
size_t fm_report_group_count(const struct FmReport *report);

/*
 # Safety
 `report` must be a live handle; `prob` must be writable.
 */
enum FmStatus fm_report_group_prob(const struct FmReport *report, size_t index, double *prob);

/*
 1 when the trace budget ran out before the sample bound was met, 0
 otherwise, -1 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
int32_t fm_report_non_pac(const struct FmReport *report);

/*
 The report as JSON; free with [`fm_string_free`]. Null for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
char *fm_report_to_json(const struct FmReport *report);

/*
 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum FmStatus fm_dtmc_load(const char *path, struct FmDtmc **out);

/*
 # Safety
 `dtmc` must be null or a handle from [`fm_dtmc_load`], freed once.
 */
void fm_dtmc_free(struct FmDtmc *dtmc);

/*
 # Safety
 `dtmc` must be null or a live handle.
 */
size_t fm_dtmc_state_count(const struct FmDtmc *dtmc);

/*
 Probability of eventually reaching `target` from `source`.

 # Safety
 `dtmc` must be a live handle; `prob` must be writable.
 */
enum FmStatus fm_dtmc_reach(const struct FmDtmc *dtmc, size_t source, size_t target, double *prob);

/*
 Graphviz rendering; free with [`fm_string_free`]. Null for a null handle.

 # Safety
 `dtmc` must be null or a live handle.
 */
char *fm_dtmc_to_dot(const struct FmDtmc *dtmc);

/*
 Splits a fairness accuracy and confidence into learner parameters.

 # Safety
 `epsilon` and `delta` must be writable.
 */
enum FmStatus fm_derive_eps_delta(double mu_eps, double mu_delta, double *epsilon, double *delta);

/*
 Sample bound for one state given its outgoing transition counts.

 # Safety
 `row` must point to `len` counts (or be null when `len` is 0).
 */
double fm_compute_hn(double epsilon, double delta_prime, const uint64_t *row, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAIRMC_H */
