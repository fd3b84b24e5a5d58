#ifndef COARSE_LAB_H
#define COARSE_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdbool.h>

/**
 * Status codes. `CheckFailed` and `InvalidInput` mirror CLI exit codes 1 and 2.
 */
typedef enum CoarseLabStatus {
  COARSE_LAB_STATUS_OK = 0,
  /**
   * A certificate was produced but some checked inequality fails.
   */
  COARSE_LAB_STATUS_CHECK_FAILED = 1,
  /**
   * Parse error, violated precondition or invalid object.
   */
  COARSE_LAB_STATUS_INVALID_INPUT = 2,
  COARSE_LAB_STATUS_NULL_POINTER = 3,
  COARSE_LAB_STATUS_INVALID_UTF8 = 4,
  COARSE_LAB_STATUS_IO = 5,
  COARSE_LAB_STATUS_OUT_OF_RANGE = 6,
  COARSE_LAB_STATUS_PANIC = 7,
} CoarseLabStatus;

/**
 * Opaque certificate.
 */
typedef struct CoarseLabCertificate CoarseLabCertificate;

/**
 * Opaque finite metric space.
 */
typedef struct CoarseLabSpace CoarseLabSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy of the last error message on this thread, or NULL if the last call
 * succeeded. Free with [`coarse_lab_string_free`].
 */
char *coarse_lab_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. NULL is ignored.
 */
void coarse_lab_string_free(char *s);

/**
 * Parses a space description (the JSON accepted by `check-space`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum CoarseLabStatus coarse_lab_space_from_json(const char *json, struct CoarseLabSpace **out);

/**
 * Number of points, 0 for NULL.
 *
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t coarse_lab_space_len(const struct CoarseLabSpace *space);

/**
 * # Safety
 * `space` must be a live handle and `out` a valid pointer.
 */
enum CoarseLabStatus coarse_lab_space_distance(const struct CoarseLabSpace *space,
                                               size_t x,
                                               size_t y,
                                               double *out);

/**
 * # Safety
 * `space` must be a live handle and `out` a valid pointer.
 */
enum CoarseLabStatus coarse_lab_space_diameter(const struct CoarseLabSpace *space, double *out);

/**
 * # Safety
 * `space` must come from [`coarse_lab_space_from_json`] and not be freed twice.
 */
void coarse_lab_space_free(struct CoarseLabSpace *space);

/**
 * Runs a scenario file. On `Ok` and `CheckFailed` a certificate is stored
 * in `*out`; otherwise `*out` is NULL.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum CoarseLabStatus coarse_lab_run_scenario_file(const char *path,
                                                  struct CoarseLabCertificate **out);

/**
 * Runs scenario JSON given inline; relative input paths resolve against
 * `base_dir` (NULL means the current directory).
 *
 * # Safety
 * `json` and a non-NULL `base_dir` must be NUL-terminated; `out` must be valid.
 */
enum CoarseLabStatus coarse_lab_run_scenario_json(const char *json,
                                                  const char *base_dir,
                                                  struct CoarseLabCertificate **out);

/**
 * # Safety
 * `cert` must be NULL or a live handle.
 */
bool coarse_lab_certificate_pass(const struct CoarseLabCertificate *cert);

/**
 * Number of checked inequalities.
 *
 * # Safety
 * `cert` must be NULL or a live handle.
 */
size_t coarse_lab_certificate_check_count(const struct CoarseLabCertificate *cert);

/**
 * Both sides of check `index`.
 *
 * # Safety
 * `cert` must be a live handle; `lhs`, `rhs` and `pass` valid pointers.
 */
enum CoarseLabStatus coarse_lab_certificate_check(const struct CoarseLabCertificate *cert,
                                                  size_t index,
                                                  double *lhs,
                                                  double *rhs,
                                                  bool *pass);

/**
 * The certificate as JSON (the CLI's byte format). Free with [`coarse_lab_string_free`].
 *
 * # Safety
 * `cert` must be NULL or a live handle.
 */
char *coarse_lab_certificate_json(const struct CoarseLabCertificate *cert);

/**
 * # Safety
 * `cert` must come from this library and not be freed twice.
 */
void coarse_lab_certificate_free(struct CoarseLabCertificate *cert);

/**
 * Library version, static storage; do not free.
 */
const char *coarse_lab_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COARSE_LAB_H */
