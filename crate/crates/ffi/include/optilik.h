#ifndef OPTILIK_H
#define OPTILIK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Fisher-Rao ball over covariances.
#define OPTILIK_DIVERGENCE_FR 0

// KL ball over covariances.
#define OPTILIK_DIVERGENCE_KL 1

// Fisher-Rao ball over means, covariance fixed.
#define OPTILIK_DIVERGENCE_FR_MEAN 2

// KL ball over means, covariance fixed.
#define OPTILIK_DIVERGENCE_KL_MEAN 3

typedef enum OptilikStatus {
  OPTILIK_STATUS_OK = 0,
  OPTILIK_STATUS_NULL_POINTER = 1,
  OPTILIK_STATUS_INVALID_ARGUMENT = 2,
  OPTILIK_STATUS_DIMENSION_MISMATCH = 3,
  OPTILIK_STATUS_NOT_POSITIVE_DEFINITE = 4,
  OPTILIK_STATUS_SOLVER_FAILURE = 5,
  OPTILIK_STATUS_PANIC = 6,
} OptilikStatus;

// Opaque symmetric positive definite matrix.
typedef struct OptilikSpd OptilikSpd;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread; empty after a success.
// The pointer stays valid until the next `optilik_*` call on the same thread.
const char *optilik_last_error(void);

// Library version as a static NUL-terminated string.
const char *optilik_version(void);

// Creates an SPD matrix from `dim * dim` row-major entries. The input is
// symmetrized; it must be symmetric to within rounding and positive definite.
//
// # Safety
// `entries` must point to `dim * dim` readable doubles and `out` must be writable.
enum OptilikStatus optilik_spd_new(const double *entries, size_t dim, struct OptilikSpd **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `spd` must be null or a handle from this library that has not been freed.
void optilik_spd_free(struct OptilikSpd *spd);

// Dimension of the matrix, or 0 for null.
//
// # Safety
// `spd` must be null or a live handle.
size_t optilik_spd_dim(const struct OptilikSpd *spd);

// Copies the entries, row-major, into `out` (length `len`, at least `dim * dim`).
//
// # Safety
// `spd` must be a live handle; `out` must hold `len` writable doubles.
enum OptilikStatus optilik_spd_entries(const struct OptilikSpd *spd, double *out, size_t len);

// Fisher-Rao distance between `N(0, a)` and `N(0, b)`.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum OptilikStatus optilik_fr_distance(const struct OptilikSpd *a,
                                       const struct OptilikSpd *b,
                                       double *out);

// `KL(N(0, p) ‖ N(0, q))`.
//
// # Safety
// `p` and `q` must be live handles; `out` must be writable.
enum OptilikStatus optilik_kl_divergence(const struct OptilikSpd *p,
                                         const struct OptilikSpd *q,
                                         double *out);

// Point at fraction `t ∈ [0, 1]` along the Fisher-Rao geodesic from `a` to `b`.
// The result is a new handle owned by the caller.
//
// # Safety
// `a` and `b` must be live handles; `out` must be writable.
enum OptilikStatus optilik_geodesic(const struct OptilikSpd *a,
                                    const struct OptilikSpd *b,
                                    double t,
                                    struct OptilikSpd **out);

// Optimistic log-likelihood of `count` observations (row-major, `count × dim`)
// over a ball of radius `rho` around `N(mean, cov)`.
//
// `divergence` is one of the `OPTILIK_DIVERGENCE_*` constants. The value
// `−min(Tr(S Σ⁻¹) + log det Σ)` is written to `value_out`. For covariance
// balls the optimal covariance is returned through `cov_out` when it is not
// null; for mean balls the optimal mean (length `dim`) is copied to
// `mean_out` when it is not null.
//
// # Safety
// Pointers must be valid for the stated lengths; `cov` must be a live handle.
enum OptilikStatus optilik_optimistic_loglik(uint32_t divergence,
                                             const double *observations,
                                             size_t count,
                                             const double *mean,
                                             const struct OptilikSpd *cov,
                                             double rho,
                                             double *value_out,
                                             struct OptilikSpd **cov_out,
                                             double *mean_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTILIK_H */
