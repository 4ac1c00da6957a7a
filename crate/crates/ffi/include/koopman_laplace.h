#ifndef KOOPMAN_LAPLACE_H
#define KOOPMAN_LAPLACE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum KlStatus {
  KL_STATUS_OK = 0,
  KL_STATUS_NULL_POINTER = 1,
  KL_STATUS_INVALID_INPUT = 2,
  KL_STATUS_DIMENSION_MISMATCH = 3,
  KL_STATUS_BUFFER_TOO_SMALL = 4,
  KL_STATUS_STEP_SIZE_UNDERFLOW = 10,
  KL_STATUS_NON_FINITE = 11,
  KL_STATUS_MISSING_JACOBIAN = 12,
  KL_STATUS_NO_LIMIT_CYCLE = 13,
  KL_STATUS_NON_CONVERGENCE = 14,
  KL_STATUS_PHASE_BLIND = 15,
  KL_STATUS_DEGENERATE_FIT = 16,
  KL_STATUS_ROC_VIOLATION = 17,
  KL_STATUS_SINGULAR = 18,
  KL_STATUS_ALIASING = 19,
  KL_STATUS_NUMERIC = 20,
  KL_STATUS_CONFIG = 21,
  KL_STATUS_IO = 22,
  KL_STATUS_PANIC = 99,
} KlStatus;

/**
 * Located limit cycle with its Floquet data.
 */
typedef struct KlLimitCycle KlLimitCycle;

/**
 * Poles and residues of a truncated Laplace-domain expansion.
 */
typedef struct KlPoleSet KlPoleSet;

/**
 * A dynamical system `ẋ = F(x)`.
 */
typedef struct KlSystem KlSystem;

/**
 * Uniformly sampled trajectory.
 */
typedef struct KlTrajectory KlTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *kl_version(void);

/**
 * Message for the most recent failure on this thread; empty after a success.
 * Valid until the next `kl_*` call on the same thread.
 */
const char *kl_last_error_message(void);

/**
 * Van der Pol oscillator with parameter `eps`.
 */
enum KlStatus kl_system_vdp(double eps, struct KlSystem **out);

/**
 * Two coupled van der Pol oscillators in state order `(x, ẋ, y, ẏ)`.
 */
enum KlStatus kl_system_coupled_vdp(double eps,
                                    double kx,
                                    double ky,
                                    double kc,
                                    struct KlSystem **out);

/**
 * Linear system `ẋ = A x` with `A` given as an `n × n` row-major array.
 */
enum KlStatus kl_system_linear(const double *a, size_t n, struct KlSystem **out);

/**
 * `ẋ₁ = λ₁x₁`, `ẋ₂ = λ₂x₂ + x₁²`.
 */
enum KlStatus kl_system_quadratic_equilibrium(double lambda1,
                                              double lambda2,
                                              struct KlSystem **out);

/**
 * State dimension, 0 for a null handle.
 */
size_t kl_system_dim(const struct KlSystem *sys);

void kl_system_free(struct KlSystem *sys);

/**
 * Integrates from `x0` (length `n`) to `t_end`, sampled every `dt`.
 */
enum KlStatus kl_integrate(const struct KlSystem *sys,
                           const double *x0,
                           size_t n,
                           double t_end,
                           double dt,
                           double tol,
                           struct KlTrajectory **out);

/**
 * Number of samples, 0 for a null handle.
 */
size_t kl_trajectory_len(const struct KlTrajectory *traj);

size_t kl_trajectory_dim(const struct KlTrajectory *traj);

double kl_trajectory_dt(const struct KlTrajectory *traj);

/**
 * Copies the states into `buf` as a `len × dim` row-major array.
 */
enum KlStatus kl_trajectory_states(const struct KlTrajectory *traj, double *buf, size_t cap);

void kl_trajectory_free(struct KlTrajectory *traj);

/**
 * Settles from `x0` for `t_settle`, then measures period and Floquet data.
 */
enum KlStatus kl_limit_cycle_locate(const struct KlSystem *sys,
                                    const double *x0,
                                    size_t n,
                                    double t_settle,
                                    double tol,
                                    struct KlLimitCycle **out);

enum KlStatus kl_limit_cycle_period(const struct KlLimitCycle *lc, double *out);

enum KlStatus kl_limit_cycle_omega(const struct KlLimitCycle *lc, double *out);

enum KlStatus kl_limit_cycle_trivial_multiplier(const struct KlLimitCycle *lc,
                                                double *re,
                                                double *im);

/**
 * Number of non-trivial Floquet exponents, 0 for a null handle.
 */
size_t kl_limit_cycle_exponent_count(const struct KlLimitCycle *lc);

/**
 * Non-trivial exponents `ln μ / T`, slowest decay first.
 */
enum KlStatus kl_limit_cycle_exponents(const struct KlLimitCycle *lc,
                                       double *re,
                                       double *im,
                                       size_t cap);

void kl_limit_cycle_free(struct KlLimitCycle *lc);

/**
 * Truncated Laplace transform of a real scalar sequence sampled every `dt`,
 * with the tail bound `max|y| e^{−Re s T}/Re s`.
 */
enum KlStatus kl_laplace_numeric(const double *samples,
                                 size_t len,
                                 double dt,
                                 double s_re,
                                 double s_im,
                                 double t_max,
                                 double *out_re,
                                 double *out_im,
                                 double *out_bound);

/**
 * Prony fit of order `order`. `im` may be null for real data.
 */
enum KlStatus kl_prony(const double *re,
                       const double *im,
                       size_t len,
                       double dt,
                       size_t order,
                       struct KlPoleSet **out);

/**
 * Eigen-expansion of `cᵀ(sI − A)⁻¹x₀`; `a` is `n × n` row-major.
 */
enum KlStatus kl_linear_expansion(const double *a,
                                  size_t n,
                                  const double *c,
                                  const double *x0,
                                  struct KlPoleSet **out);

/**
 * Number of poles, 0 for a null handle.
 */
size_t kl_pole_set_len(const struct KlPoleSet *set);

/**
 * Number of observable components per residue.
 */
size_t kl_pole_set_dim(const struct KlPoleSet *set);

double kl_pole_set_roc_abscissa(const struct KlPoleSet *set);

enum KlStatus kl_pole_set_pole(const struct KlPoleSet *set, size_t k, double *re, double *im);

/**
 * Residue vector of pole `k` (length [`kl_pole_set_dim`]).
 */
enum KlStatus kl_pole_set_residue(const struct KlPoleSet *set,
                                  size_t k,
                                  double *re,
                                  double *im,
                                  size_t cap);

/**
 * `Σ r_k / (s − s_k)` per component; fails with `ROC_VIOLATION` left of the abscissa.
 */
enum KlStatus kl_pole_set_eval(const struct KlPoleSet *set,
                               double s_re,
                               double s_im,
                               double *re,
                               double *im,
                               size_t cap);

/**
 * JSON text of the set; release with [`kl_string_free`].
 */
enum KlStatus kl_pole_set_to_json(const struct KlPoleSet *set, char **out);

void kl_pole_set_free(struct KlPoleSet *set);

/**
 * Releases a string returned by this library.
 */
void kl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOOPMAN_LAPLACE_H */
