#ifndef IONHEAT_H
#define IONHEAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which diagonal entries the pinning disorder multiplies.
 */
typedef enum IonheatDisorderAxes {
  IONHEAT_DISORDER_AXES_XY = 0,
  IONHEAT_DISORDER_AXES_X = 1,
  IONHEAT_DISORDER_AXES_XYZ = 2,
} IonheatDisorderAxes;

/**
 * Status code returned by every FFI call.
 */
typedef enum IonheatStatus {
  IONHEAT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  IONHEAT_STATUS_NULL_ARGUMENT = 1,
  /**
   * The problem description was invalid.
   */
  IONHEAT_STATUS_INVALID_CONFIG = 2,
  /**
   * A numeric or convergence failure occurred.
   */
  IONHEAT_STATUS_NUMERIC_ERROR = 3,
  /**
   * The caller-provided buffer is too small.
   */
  IONHEAT_STATUS_BUFFER_TOO_SMALL = 4,
} IonheatStatus;

/**
 * One solved steady-state transport problem (opaque).
 */
typedef struct IonheatSystem IonheatSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Solve a steady-state transport problem. On success writes a new handle to
 * `out` and returns Ok; the handle must be released with
 * `ionheat_system_free`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IonheatStatus ionheat_system_new(size_t n_ions,
                                      double alpha,
                                      double gamma0,
                                      double t_left,
                                      double t_right,
                                      double region_fraction,
                                      double disorder,
                                      enum IonheatDisorderAxes disorder_axes,
                                      uint64_t seed,
                                      struct IonheatSystem **out);

/**
 * Release a handle created by `ionheat_system_new`. A null handle is a no-op.
 *
 * # Safety
 * `sys` must be null or a pointer returned by `ionheat_system_new` that has
 * not already been freed.
 */
void ionheat_system_free(struct IonheatSystem *sys);

/**
 * Number of ions.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum IonheatStatus ionheat_n_ions(const struct IonheatSystem *sys, size_t *out);

/**
 * Number of normal modes (2 x 3 x n_ions).
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum IonheatStatus ionheat_n_modes(const struct IonheatSystem *sys, size_t *out);

/**
 * Axial extent of the crystal.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum IonheatStatus ionheat_length(const struct IonheatSystem *sys, double *out);

/**
 * Stationary heat current from the left bath into the crystal.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum IonheatStatus ionheat_heat_current(const struct IonheatSystem *sys, double *out);

/**
 * Thermal conductivity kappa = |Qdot| L / |T_L - T_R|. Fails when the bath
 * temperatures are equal.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum IonheatStatus ionheat_conductivity(const struct IonheatSystem *sys, double *out);

/**
 * Normalized central slope of the transverse temperature profile. Fails when
 * the bath temperatures are equal.
 *
 * # Safety
 * `sys` must be a live handle and `out` a valid pointer.
 */
enum IonheatStatus ionheat_central_gradient(const struct IonheatSystem *sys, double *out);

/**
 * Copy the equilibrium positions as n_ions (x, y, z) triples; `buffer` must
 * hold at least 3 * n_ions values.
 *
 * # Safety
 * `sys` must be a live handle and `buffer` valid for `len` writes.
 */
enum IonheatStatus ionheat_positions(const struct IonheatSystem *sys, double *buffer, size_t len);

/**
 * Copy the complex mode frequencies; each buffer must hold `n_modes` values.
 *
 * # Safety
 * `sys` must be a live handle; `re` and `im` must be valid for `len` writes.
 */
enum IonheatStatus ionheat_mode_frequencies(const struct IonheatSystem *sys,
                                            double *re,
                                            double *im,
                                            size_t len);

/**
 * Copy the per-mode heat currents; `buffer` must hold `n_modes` values.
 *
 * # Safety
 * `sys` must be a live handle and `buffer` valid for `len` writes.
 */
enum IonheatStatus ionheat_mode_currents(const struct IonheatSystem *sys,
                                         double *buffer,
                                         size_t len);

/**
 * Copy the per-ion transverse temperatures; `buffer` must hold `n_ions`
 * values.
 *
 * # Safety
 * `sys` must be a live handle and `buffer` valid for `len` writes.
 */
enum IonheatStatus ionheat_ion_temperatures(const struct IonheatSystem *sys,
                                            double *buffer,
                                            size_t len);

/**
 * Copy the last error message of this thread as a NUL-terminated string.
 * Returns the number of bytes written (including the terminator), or the
 * required size if `buffer` is null or too small.
 *
 * # Safety
 * `buffer` must be null or valid for `len` writes.
 */
size_t ionheat_last_error(char *buffer, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IONHEAT_H */
