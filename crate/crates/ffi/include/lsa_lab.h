#ifndef LSA_LAB_H
#define LSA_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsaLabStatus {
  LSA_LAB_STATUS_OK = 0,
  LSA_LAB_STATUS_NULL_POINTER = 1,
  LSA_LAB_STATUS_INVALID_ARGUMENT = 2,
  LSA_LAB_STATUS_COMPUTE_FAILED = 3,
  LSA_LAB_STATUS_NOT_FOUND = 4,
  LSA_LAB_STATUS_PANIC = 5,
} LsaLabStatus;

// Drift certificate handle.
typedef struct LsaLabCertificate LsaLabCertificate;

// Constants report handle.
typedef struct LsaLabReport LsaLabReport;

// Step-size schedule handle.
typedef struct LsaLabSchedule LsaLabSchedule;

typedef struct LsaLabCertificateSummary {
  double c;
  double b;
  double delta;
  double r0;
  // Ergodicity factor `λ ≤ e^{−c}`.
  double lambda;
  double b_tilde;
  double b_prime;
} LsaLabCertificateSummary;

typedef struct LsaLabLyapunov {
  double a;
  double kappa_q;
  double alpha_cap;
  double residual;
} LsaLabLyapunov;

typedef struct LsaLabCounterexample {
  double pi1;
  double truncation_mass;
  bool bound_holds;
} LsaLabCounterexample;

typedef struct LsaLabA5 {
  double minimal_c_alpha;
  double bound;
  bool passes;
} LsaLabA5;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null. The pointer stays valid until the
// next failing call on the same thread.
const char *lsa_lab_last_error(void);

// Library version as a static NUL-terminated string.
const char *lsa_lab_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from this library and not yet freed.
void lsa_lab_string_free(char *s);

// Certificate with `W ≡ 1` on a finite chain; `kernel` is `states × states`.
//
// # Safety
// `kernel` must point to `states²` readable doubles and `out` must be writable.
enum LsaLabStatus lsa_lab_certificate_finite_uniform(const double *kernel,
                                                     size_t states,
                                                     double c,
                                                     double delta,
                                                     size_t horizon,
                                                     struct LsaLabCertificate **out);

// Certificate with prescribed levels `W(i) = levels[i]` on a finite chain.
//
// # Safety
// `kernel` must point to `states²` doubles, `levels` to `states` doubles, and `out` must be writable.
enum LsaLabStatus lsa_lab_certificate_finite_levels(const double *kernel,
                                                    size_t states,
                                                    const double *levels,
                                                    double c,
                                                    double delta,
                                                    double r0,
                                                    size_t horizon,
                                                    struct LsaLabCertificate **out);

// Certificate `W(x) = 1 + |x|` for `x' = ρx + σξ`. Pass NaN as `r0` to use the smallest certified level.
//
// # Safety
// `out` must be writable.
enum LsaLabStatus lsa_lab_certificate_gaussian_ar(double rho,
                                                  double sigma,
                                                  double c,
                                                  double r0,
                                                  struct LsaLabCertificate **out);

// # Safety
// `cert` must be null or a handle from this library that has not been freed.
void lsa_lab_certificate_free(struct LsaLabCertificate *cert);

// # Safety
// `cert` must be a live handle and `out` writable.
enum LsaLabStatus lsa_lab_certificate_summary(const struct LsaLabCertificate *cert,
                                              struct LsaLabCertificateSummary *out);

// Solves `AᵀQ + QA = I` for a `d × d` matrix `a`. `q_out` may be null; otherwise it receives `Q` row-major.
//
// # Safety
// `a` must point to `d²` doubles, `q_out` must be null or hold `d²` writable doubles, `out` must be writable.
enum LsaLabStatus lsa_lab_lyapunov(const double *a,
                                   size_t d,
                                   double *q_out,
                                   struct LsaLabLyapunov *out);

// Stability constants of order `p` for the mean matrix `a` (`d × d`) under `cert`.
// Values are read back with [`lsa_lab_report_get`], e.g. `"C_st_p2"`.
//
// # Safety
// `cert` must be a live handle, `a` must point to `d²` doubles and `out` must be writable.
enum LsaLabStatus lsa_lab_stability_constants(const struct LsaLabCertificate *cert,
                                              const double *a,
                                              size_t d,
                                              double beta,
                                              double c_a,
                                              double p,
                                              struct LsaLabReport **out);

// Looks up a named value, falling back to the echoed inputs. Returns `NotFound` for unknown names.
//
// # Safety
// `report` must be a live handle, `name` a NUL-terminated string and `out` writable.
enum LsaLabStatus lsa_lab_report_get(const struct LsaLabReport *report,
                                     const char *name,
                                     double *out);

// The report as JSON; release with [`lsa_lab_string_free`]. Returns null on failure.
//
// # Safety
// `report` must be a live handle.
char *lsa_lab_report_json(const struct LsaLabReport *report);

// # Safety
// `report` must be null or a handle from this library that has not been freed.
void lsa_lab_report_free(struct LsaLabReport *report);

// Exact scalar recursion on the forward recurrence chain with `P(Y = k) ∝ k^{-s}`, truncated at `k_max`.
// `u_out` receives `u_0, …, u_{n_max}`.
//
// # Safety
// `u_out` must hold `n_max + 1` writable doubles and `out` must be writable.
enum LsaLabStatus lsa_lab_counterexample(double zeta_s,
                                         uint64_t k_max,
                                         double epsilon,
                                         double alpha,
                                         double theta0,
                                         size_t n_max,
                                         double *u_out,
                                         struct LsaLabCounterexample *out);

// `α_k = alpha` for every `k ≥ 1`.
//
// # Safety
// `out` must be writable.
enum LsaLabStatus lsa_lab_schedule_constant(double alpha, struct LsaLabSchedule **out);

// `α_k = c/(k + n0)^t`.
//
// # Safety
// `out` must be writable.
enum LsaLabStatus lsa_lab_schedule_polynomial(double c,
                                              double n0,
                                              double t,
                                              struct LsaLabSchedule **out);

// # Safety
// `schedule` must be null or a handle from this library that has not been freed.
void lsa_lab_schedule_free(struct LsaLabSchedule *schedule);

// # Safety
// `schedule` must be a live handle and `out` writable.
enum LsaLabStatus lsa_lab_schedule_alpha(const struct LsaLabSchedule *schedule,
                                         uint64_t k,
                                         double *out);

// Step-ratio check `α_k/α_{k+1} ≤ 1 + c_α α_{k+1}` with `c_α ≤ a/16` over `k < horizon`.
//
// # Safety
// `schedule` must be a live handle and `out` writable.
enum LsaLabStatus lsa_lab_validate_a5(const struct LsaLabSchedule *schedule,
                                      double a,
                                      uint64_t horizon,
                                      struct LsaLabA5 *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSA_LAB_H */
