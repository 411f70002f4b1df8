#ifndef KORTEWEG_H
#define KORTEWEG_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum KwStatus {
  KW_STATUS_OK = 0,
  KW_STATUS_CONFIG = 1,
  KW_STATUS_GEOMETRY = 2,
  KW_STATUS_RANGE = 3,
  KW_STATUS_PRECONDITION = 4,
  KW_STATUS_NOT_APPLICABLE = 5,
  KW_STATUS_SOLVER = 6,
  KW_STATUS_STEP_TOO_LARGE = 7,
  KW_STATUS_INTERNAL = 8,
  KW_STATUS_CONTRACT = 9,
  KW_STATUS_IO = 10,
  KW_STATUS_PARSE = 11,
  KW_STATUS_NULL_POINTER = 12,
  KW_STATUS_PANIC = 13,
} KwStatus;

/**
 * Pressure-law families, parameters `a, b, c, d` in this order:
 * polytropic `coef, exponent`; cubic `amp, center, kappa`; van der Waals
 * `a, b, r_gas, temp`.
 */
typedef enum KwLawKind {
  KW_LAW_KIND_POLYTROPIC = 0,
  KW_LAW_KIND_CUBIC = 1,
  KW_LAW_KIND_VDW = 2,
} KwLawKind;

typedef enum KwCellMethod {
  KW_CELL_METHOD_UZAWA = 0,
  KW_CELL_METHOD_DIRECT = 1,
} KwCellMethod;

/**
 * Opaque pressure law.
 */
typedef struct KwPressureLaw KwPressureLaw;

/**
 * Opaque unit cell.
 */
typedef struct KwUnitCell KwUnitCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *kw_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *kw_version(void);

/**
 * # Safety
 * `out_law` must be a valid pointer; the result is freed with [`kw_pressure_law_free`].
 */
enum KwStatus kw_pressure_law_new(enum KwLawKind kind,
                                  double a,
                                  double b,
                                  double c,
                                  double d,
                                  double gamma,
                                  double rho_s,
                                  double r_max,
                                  struct KwPressureLaw **out_law);

/**
 * # Safety
 * `law` must come from [`kw_pressure_law_new`] and not be used afterwards. Null is ignored.
 */
void kw_pressure_law_free(struct KwPressureLaw *law);

/**
 * Evaluate `p, p', p'', P` at `r` (any output may be null).
 *
 * # Safety
 * `law` must be a live handle; non-null outputs must be valid.
 */
enum KwStatus kw_pressure_eval(const struct KwPressureLaw *law,
                               double r,
                               double *p,
                               double *dp,
                               double *d2p,
                               double *big_p);

/**
 * Admissibility of the generalized pressure on `[0, r_max]`.
 *
 * # Safety
 * `law` must be a live handle; outputs must be valid.
 */
enum KwStatus kw_pressure_check(const struct KwPressureLaw *law,
                                double r_max,
                                size_t n_samples,
                                bool *admissible,
                                double *alpha);

/**
 * Unit cell with a centred disc grain of radius `r` on an `m x m` grid.
 *
 * # Safety
 * `out_cell` must be valid; the result is freed with [`kw_unit_cell_free`].
 */
enum KwStatus kw_unit_cell_disc(double r, size_t m, struct KwUnitCell **out_cell);

/**
 * # Safety
 * `cell` must come from [`kw_unit_cell_disc`] and not be used afterwards. Null is ignored.
 */
void kw_unit_cell_free(struct KwUnitCell *cell);

/**
 * # Safety
 * `cell` must be a live handle; `theta` must be valid.
 */
enum KwStatus kw_unit_cell_porosity(const struct KwUnitCell *cell, double *theta);

/**
 * Permeability matrix, written row-major into `a[0..4]`. `tol <= 0` selects
 * the default Uzawa tolerance.
 *
 * # Safety
 * `cell` must be a live handle; `a` must point to four writable doubles.
 */
enum KwStatus kw_permeability(const struct KwUnitCell *cell,
                              enum KwCellMethod method,
                              double tol,
                              double *a);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KORTEWEG_H */
