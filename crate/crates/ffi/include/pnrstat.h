#ifndef PNRSTAT_H
#define PNRSTAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Library error classes share their values with the CLI exit codes.
 */
enum PnrStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  PNR_STATUS_OK = 0,
  PNR_STATUS_INVALID_PARAMETER = 2,
  PNR_STATUS_INVALID_DISTRIBUTION = 3,
  PNR_STATUS_DIMENSION_MISMATCH = 4,
  PNR_STATUS_MODEL_SUPPORT = 5,
  PNR_STATUS_UNDEFINED_STATISTIC = 6,
  PNR_STATUS_SINGULAR = 7,
  PNR_STATUS_MALFORMED_INPUT = 8,
  PNR_STATUS_UNKNOWN_VARIANT = 9,
  PNR_STATUS_IO = 10,
  PNR_STATUS_NULL_POINTER = 20,
  PNR_STATUS_BUFFER_TOO_SMALL = 21,
  PNR_STATUS_PANIC = 22,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum PnrStatus PnrStatus;
#else
typedef int32_t PnrStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Opaque result of an iterative retrieval.
 */
typedef struct PnrReport PnrReport;

/**
 * Opaque response matrix.
 */
typedef struct PnrResponseMatrix PnrResponseMatrix;

/**
 * Iterative retrieval parameters. Obtain defaults from [`pnr_settings_default`].
 */
typedef struct PnrSettings {
  /**
   * One of the [`PnrAlgorithm`] values.
   */
  int32_t algorithm;
  double lambda;
  double epsilon;
  uint64_t max_iterations;
} PnrSettings;

/**
 * Moments and nonclassicality indicators; undefined entries are NaN.
 */
typedef struct PnrDiagnostics {
  double mean;
  double variance;
  double g2;
  double mandel_q;
  double parity;
  double wigner_origin;
} PnrDiagnostics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *pnr_last_error_message(void);

struct PnrSettings pnr_settings_default(void);

/**
 * Builds the response matrix of `channels` channels at `efficiency` for photon numbers
 * `0..=cutoff`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
PnrStatus pnr_response_matrix_new(size_t channels,
                                  double efficiency,
                                  size_t cutoff,
                                  struct PnrResponseMatrix **out);

/**
 * # Safety
 * `matrix` must be NULL or a handle from [`pnr_response_matrix_new`] not yet freed.
 */
void pnr_response_matrix_free(struct PnrResponseMatrix *matrix);

/**
 * Number of rows (`channels + 1`), or 0 for NULL.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
size_t pnr_response_matrix_rows(const struct PnrResponseMatrix *matrix);

/**
 * Number of columns (`cutoff + 1`), or 0 for NULL.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
size_t pnr_response_matrix_cols(const struct PnrResponseMatrix *matrix);

/**
 * Copies the entries row-major into `out`, which must hold `rows * cols` values.
 *
 * # Safety
 * `matrix` must be a live handle; `out` must point to `len` writable doubles.
 */
PnrStatus pnr_response_matrix_copy(const struct PnrResponseMatrix *matrix, double *out, size_t len);

/**
 * Click probabilities `C p` of a photon distribution of length `cols`.
 *
 * # Safety
 * `p` must point to `p_len` doubles and `out` to `out_len` writable doubles.
 */
PnrStatus pnr_forward(const struct PnrResponseMatrix *matrix,
                      const double *p,
                      size_t p_len,
                      double *out,
                      size_t out_len);

/**
 * Runs EM or EME on click data (counts or unnormalized frequencies of length `rows`).
 *
 * # Safety
 * `clicks` must point to `len` doubles; `settings` may be NULL for defaults; `out`
 * must be valid for writing one handle.
 */
PnrStatus pnr_retrieve(const struct PnrResponseMatrix *matrix,
                       const double *clicks,
                       size_t len,
                       const struct PnrSettings *settings,
                       struct PnrReport **out);

/**
 * # Safety
 * `report` must be NULL or a handle from [`pnr_retrieve`] not yet freed.
 */
void pnr_report_free(struct PnrReport *report);

/**
 * Length of the retrieved distribution, or 0 for NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
size_t pnr_report_len(const struct PnrReport *report);

/**
 * # Safety
 * `report` must be NULL or a live handle.
 */
uint64_t pnr_report_iterations(const struct PnrReport *report);

/**
 * Whether the stop distance was reached before the iteration cap.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
bool pnr_report_converged(const struct PnrReport *report);

/**
 * Copies the retrieved distribution into `out`.
 *
 * # Safety
 * `report` must be a live handle; `out` must point to `len` writable doubles.
 */
PnrStatus pnr_report_estimate(const struct PnrReport *report, double *out, size_t len);

/**
 * Direct (pseudo)inverse solution; entries may be negative.
 *
 * # Safety
 * `clicks` must point to `len` doubles and `out` to `out_len` writable doubles.
 */
PnrStatus pnr_direct_inverse(const struct PnrResponseMatrix *matrix,
                             const double *clicks,
                             size_t len,
                             double *out,
                             size_t out_len);

/**
 * Evaluates a source given in compact form (e.g. `"thermal:5"`) on `0..=cutoff`.
 * `out` must hold `cutoff + 1` values.
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `out` must point to `len` writable doubles.
 */
PnrStatus pnr_source_distribution(const char *spec, size_t cutoff, double *out, size_t len);

/**
 * Diagnostics of a (renormalized) photon distribution.
 *
 * # Safety
 * `p` must point to `len` doubles and `out` must be valid for writing.
 */
PnrStatus pnr_diagnostics(const double *p, size_t len, struct PnrDiagnostics *out);

/**
 * Fidelity and total variation distance between two distributions (the shorter is
 * zero-padded).
 *
 * # Safety
 * `p` and `q` must point to `p_len` and `q_len` doubles; the outputs must be writable.
 */
PnrStatus pnr_compare(const double *p,
                      size_t p_len,
                      const double *q,
                      size_t q_len,
                      double *fidelity,
                      double *tvd);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PNRSTAT_H */
