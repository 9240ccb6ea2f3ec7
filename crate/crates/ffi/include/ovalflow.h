#ifndef OVALFLOW_H
#define OVALFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define OVALFLOW_OK 0

#define OVALFLOW_ERR_NULL -1

#define OVALFLOW_ERR_PARAM -2

#define OVALFLOW_ERR_NUMERIC -3

#define OVALFLOW_ERR_RANGE -4

#define OVALFLOW_ERR_BUFFER -5

#define OVALFLOW_ERR_CONFIG -6

#define OVALFLOW_ERR_IO -7

#define OVALFLOW_ERR_PANIC -8

/**
 * Soliton profile handle.
 */
typedef struct OvalflowBryant OvalflowBryant;

/**
 * Profile state handle.
 */
typedef struct OvalflowProfile OvalflowProfile;

typedef struct OvalflowAsymptotics {
  double r_large;
  double r2_phi_large;
  double r2_phi_limit_expected;
  double k_orb_tip;
  double k_rad_tip;
  double scalar_tip;
  double ode_residual;
} OvalflowAsymptotics;

typedef struct OvalflowPic {
  double uniform_pic;
  double pic_min;
  double pic2_min;
  double r_min;
} OvalflowPic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length, or 0
 * when there is none.
 *
 * # Safety
 * `buf` must be writable for `len` bytes or be null with `len == 0`.
 */
int32_t ovalflow_last_error(char *buf, size_t len);

/**
 * Solves the soliton ODE out to `r_max`.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle to be
 * released with [`ovalflow_bryant_free`].
 */
int32_t ovalflow_bryant_solve(uint32_t n, double r_max, double tol, struct OvalflowBryant **out);

/**
 * `Φ(r)` and `Φ'(r)`.
 *
 * # Safety
 * `h` must come from [`ovalflow_bryant_solve`]; out-pointers valid.
 */
int32_t ovalflow_bryant_eval(const struct OvalflowBryant *h, double r, double *phi, double *dphi);

/**
 * Large-r and tip summary at `r_large`.
 *
 * # Safety
 * `h` from [`ovalflow_bryant_solve`]; `out` valid.
 */
int32_t ovalflow_bryant_summary(const struct OvalflowBryant *h,
                                double r_large,
                                struct OvalflowAsymptotics *out);

/**
 * # Safety
 * `h` must be null or come from [`ovalflow_bryant_solve`], freed once.
 */
void ovalflow_bryant_free(struct OvalflowBryant *h);

/**
 * Round cylinder of radius `sqrt(2(n-2)(-t))` on `[-half_width, half_width]`.
 *
 * # Safety
 * `out` valid; release the handle with [`ovalflow_profile_free`].
 */
int32_t ovalflow_profile_cylinder(uint32_t n,
                                  double t,
                                  double half_width,
                                  uint32_t points,
                                  struct OvalflowProfile **out);

/**
 * Approximate oval at `t0 = -exp(log_t0)`; with `calibrate != 0` the
 * clock is shifted so that extinction happens at `t = 0`.
 *
 * # Safety
 * `out` valid; release the handle with [`ovalflow_profile_free`].
 */
int32_t ovalflow_profile_oval(uint32_t n,
                              double log_t0,
                              uint32_t points,
                              int32_t calibrate,
                              struct OvalflowProfile **out);

/**
 * Evolves the profile in place to `t_end`.
 *
 * # Safety
 * `h` from one of the profile constructors.
 */
int32_t ovalflow_profile_evolve_to(struct OvalflowProfile *h, double t_end, double safety);

/**
 * Node count and current time.
 *
 * # Safety
 * `h` valid; out-pointers valid.
 */
int32_t ovalflow_profile_info(const struct OvalflowProfile *h, size_t *len, double *t);

/**
 * Copies the grid and `F` into caller buffers of capacity `cap`.
 *
 * # Safety
 * `z` and `f` writable for `cap` doubles.
 */
int32_t ovalflow_profile_copy(const struct OvalflowProfile *h, double *z, double *f, size_t cap);

/**
 * PIC / PIC2 summary away from the tips.
 *
 * # Safety
 * `h` valid; `out` valid.
 */
int32_t ovalflow_profile_pic(const struct OvalflowProfile *h, struct OvalflowPic *out);

/**
 * # Safety
 * `h` must be null or a profile handle, freed once.
 */
void ovalflow_profile_free(struct OvalflowProfile *h);

/**
 * Eigenvalues of the weighted Ornstein-Uhlenbeck operator on the first
 * `kmax + 1` Hermite modes, in ascending mode order.
 *
 * # Safety
 * `out` writable for `cap` doubles.
 */
int32_t ovalflow_operator_spectrum(uint32_t kmax, double *out, size_t cap);

/**
 * Runs a scenario from `key = value` config text into `dir`.
 * `passed` receives 1 when every checked invariant holds.
 *
 * # Safety
 * `config` and `dir` must be NUL-terminated strings; `passed` valid.
 */
int32_t ovalflow_run(const char *config, const char *dir, int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OVALFLOW_H */
