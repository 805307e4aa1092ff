//! C ABI over `lsa-lab`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Every fallible call returns an [`LsaLabStatus`]; on failure the message is
//! available from [`lsa_lab_last_error`] on the same thread until the next failing call.
//! Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lsa_lab::chains::{DriftCertificate, TailLaw};
use lsa_lab::constants::{ergodic_scalars, stability_constants, ConstantsReport, MatrixData, StabilityInputs};
use lsa_lab::linalg::{solve_lyapunov, Matrix};
use lsa_lab::schedules::{validate_a5, StepSchedule};
use lsa_lab::stability::counterexample_exact;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsaLabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ComputeFailed = 3,
    NotFound = 4,
    Panic = 5,
}

/// Drift certificate handle.
pub struct LsaLabCertificate(DriftCertificate);

/// Constants report handle.
pub struct LsaLabReport(ConstantsReport);

/// Step-size schedule handle.
pub struct LsaLabSchedule(StepSchedule);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsaLabCertificateSummary {
    pub c: f64,
    pub b: f64,
    pub delta: f64,
    pub r0: f64,
    /// Ergodicity factor `λ ≤ e^{−c}`.
    pub lambda: f64,
    pub b_tilde: f64,
    pub b_prime: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsaLabLyapunov {
    pub a: f64,
    pub kappa_q: f64,
    pub alpha_cap: f64,
    pub residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsaLabCounterexample {
    pub pi1: f64,
    pub truncation_mass: f64,
    pub bound_holds: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsaLabA5 {
    pub minimal_c_alpha: f64,
    pub bound: f64,
    pub passes: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (LsaLabStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LsaLabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsaLabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            LsaLabStatus::Panic
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    (LsaLabStatus::InvalidArgument, e.to_string())
}

fn compute(e: impl std::fmt::Display) -> Failure {
    (LsaLabStatus::ComputeFailed, e.to_string())
}

fn null(name: &str) -> Failure {
    (LsaLabStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn square(p: *const f64, d: usize, name: &str) -> Result<Matrix, Failure> {
    if d == 0 {
        return Err(invalid(format!("`{name}` must have dimension at least 1")));
    }
    let data = slice(p, d.checked_mul(d).ok_or_else(|| invalid("dimension overflow"))?, name)?;
    Ok(Matrix::from_row_slice(d, d, data))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

/// Message of the last failing call on this thread, or null. The pointer stays valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lsa_lab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lsa_lab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn emit_certificate(
    out: *mut *mut LsaLabCertificate,
    make: impl FnOnce() -> Result<DriftCertificate, Failure>,
) -> LsaLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cert = make()?;
        out.write(Box::into_raw(Box::new(LsaLabCertificate(cert))));
        Ok(())
    })
}

/// Certificate with `W ≡ 1` on a finite chain; `kernel` is `states × states`.
///
/// # Safety
/// `kernel` must point to `states²` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_certificate_finite_uniform(
    kernel: *const f64,
    states: usize,
    c: f64,
    delta: f64,
    horizon: usize,
    out: *mut *mut LsaLabCertificate,
) -> LsaLabStatus {
    emit_certificate(out, || {
        let k = square(kernel, states, "kernel")?;
        DriftCertificate::finite_uniform(&k, c, delta, horizon).map_err(invalid)
    })
}

/// Certificate with prescribed levels `W(i) = levels[i]` on a finite chain.
///
/// # Safety
/// `kernel` must point to `states²` doubles, `levels` to `states` doubles, and `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lsa_lab_certificate_finite_levels(
    kernel: *const f64,
    states: usize,
    levels: *const f64,
    c: f64,
    delta: f64,
    r0: f64,
    horizon: usize,
    out: *mut *mut LsaLabCertificate,
) -> LsaLabStatus {
    emit_certificate(out, || {
        let k = square(kernel, states, "kernel")?;
        let w = slice(levels, states, "levels")?;
        DriftCertificate::finite_levels(&k, w, c, delta, r0, horizon).map_err(invalid)
    })
}

/// Certificate `W(x) = 1 + |x|` for `x' = ρx + σξ`. Pass NaN as `r0` to use the smallest certified level.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_certificate_gaussian_ar(
    rho: f64,
    sigma: f64,
    c: f64,
    r0: f64,
    out: *mut *mut LsaLabCertificate,
) -> LsaLabStatus {
    emit_certificate(out, || {
        let r0 = if r0.is_nan() { None } else { Some(r0) };
        DriftCertificate::gaussian_ar_abs(rho, sigma, c, r0).map_err(invalid)
    })
}

/// # Safety
/// `cert` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_certificate_free(cert: *mut LsaLabCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// # Safety
/// `cert` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_certificate_summary(
    cert: *const LsaLabCertificate,
    out: *mut LsaLabCertificateSummary,
) -> LsaLabStatus {
    guard(|| {
        let c = &handle(cert, "cert")?.0;
        let s = ergodic_scalars(c);
        let summary = LsaLabCertificateSummary {
            c: c.c,
            b: c.b,
            delta: c.delta,
            r0: c.r0,
            lambda: s.lambda,
            b_tilde: s.b_tilde,
            b_prime: s.b_prime,
        };
        write(out, summary, "out")
    })
}

/// Solves `AᵀQ + QA = I` for a `d × d` matrix `a`. `q_out` may be null; otherwise it receives `Q` row-major.
///
/// # Safety
/// `a` must point to `d²` doubles, `q_out` must be null or hold `d²` writable doubles, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_lyapunov(
    a: *const f64,
    d: usize,
    q_out: *mut f64,
    out: *mut LsaLabLyapunov,
) -> LsaLabStatus {
    guard(|| {
        let m = square(a, d, "a")?;
        let sol = solve_lyapunov(&m).map_err(compute)?;
        if !q_out.is_null() {
            let q = std::slice::from_raw_parts_mut(q_out, d * d);
            for i in 0..d {
                for j in 0..d {
                    q[i * d + j] = sol.q[(i, j)];
                }
            }
        }
        let summary = LsaLabLyapunov { a: sol.a, kappa_q: sol.kappa_q, alpha_cap: sol.alpha_cap, residual: sol.residual };
        write(out, summary, "out")
    })
}

/// Stability constants of order `p` for the mean matrix `a` (`d × d`) under `cert`.
/// Values are read back with [`lsa_lab_report_get`], e.g. `"C_st_p2"`.
///
/// # Safety
/// `cert` must be a live handle, `a` must point to `d²` doubles and `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lsa_lab_stability_constants(
    cert: *const LsaLabCertificate,
    a: *const f64,
    d: usize,
    beta: f64,
    c_a: f64,
    p: f64,
    out: *mut *mut LsaLabReport,
) -> LsaLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cert = &handle(cert, "cert")?.0;
        let md = MatrixData::from_matrix(&square(a, d, "a")?).map_err(invalid)?;
        let st = stability_constants(cert, &StabilityInputs::new(md.clone(), beta, c_a, p)).map_err(invalid)?;
        let mut r = ConstantsReport::new();
        r.add_matrix(&md);
        r.add_certificate(cert);
        r.add_stability(&st);
        out.write(Box::into_raw(Box::new(LsaLabReport(r))));
        Ok(())
    })
}

/// Looks up a named value, falling back to the echoed inputs. Returns `NotFound` for unknown names.
///
/// # Safety
/// `report` must be a live handle, `name` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_report_get(
    report: *const LsaLabReport,
    name: *const c_char,
    out: *mut f64,
) -> LsaLabStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        if name.is_null() {
            return Err(null("name"));
        }
        let key = CStr::from_ptr(name).to_str().map_err(invalid)?;
        let v = r
            .get(key)
            .or_else(|| r.inputs.get(key).copied())
            .ok_or_else(|| (LsaLabStatus::NotFound, format!("no value named `{key}`")))?;
        write(out, v, "out")
    })
}

/// The report as JSON; release with [`lsa_lab_string_free`]. Returns null on failure.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_report_json(report: *const LsaLabReport) -> *mut c_char {
    let mut text = ptr::null_mut();
    let _ = guard(|| {
        let r = &handle(report, "report")?.0;
        text = CString::new(r.to_json()).map_err(compute)?.into_raw();
        Ok(())
    });
    text
}

/// # Safety
/// `report` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_report_free(report: *mut LsaLabReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Exact scalar recursion on the forward recurrence chain with `P(Y = k) ∝ k^{-s}`, truncated at `k_max`.
/// `u_out` receives `u_0, …, u_{n_max}`.
///
/// # Safety
/// `u_out` must hold `n_max + 1` writable doubles and `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lsa_lab_counterexample(
    zeta_s: f64,
    k_max: u64,
    epsilon: f64,
    alpha: f64,
    theta0: f64,
    n_max: usize,
    u_out: *mut f64,
    out: *mut LsaLabCounterexample,
) -> LsaLabStatus {
    guard(|| {
        if u_out.is_null() {
            return Err(null("u_out"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let ce = counterexample_exact(&TailLaw::Zeta { s: zeta_s }, k_max, epsilon, alpha, theta0, n_max)
            .map_err(invalid)?;
        std::slice::from_raw_parts_mut(u_out, n_max + 1).copy_from_slice(&ce.u);
        let summary =
            LsaLabCounterexample { pi1: ce.pi1, truncation_mass: ce.truncation_mass, bound_holds: ce.bound_holds() };
        write(out, summary, "out")
    })
}

unsafe fn emit_schedule(out: *mut *mut LsaLabSchedule, s: StepSchedule) -> LsaLabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        s.validate().map_err(invalid)?;
        out.write(Box::into_raw(Box::new(LsaLabSchedule(s))));
        Ok(())
    })
}

/// `α_k = alpha` for every `k ≥ 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_schedule_constant(alpha: f64, out: *mut *mut LsaLabSchedule) -> LsaLabStatus {
    emit_schedule(out, StepSchedule::Constant { alpha })
}

/// `α_k = c/(k + n0)^t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_schedule_polynomial(
    c: f64,
    n0: f64,
    t: f64,
    out: *mut *mut LsaLabSchedule,
) -> LsaLabStatus {
    emit_schedule(out, StepSchedule::Polynomial { c, n0, t })
}

/// # Safety
/// `schedule` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_schedule_free(schedule: *mut LsaLabSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// # Safety
/// `schedule` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_schedule_alpha(schedule: *const LsaLabSchedule, k: u64, out: *mut f64) -> LsaLabStatus {
    guard(|| {
        let s = &handle(schedule, "schedule")?.0;
        write(out, s.alpha(k), "out")
    })
}

/// Step-ratio check `α_k/α_{k+1} ≤ 1 + c_α α_{k+1}` with `c_α ≤ a/16` over `k < horizon`.
///
/// # Safety
/// `schedule` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lsa_lab_validate_a5(
    schedule: *const LsaLabSchedule,
    a: f64,
    horizon: u64,
    out: *mut LsaLabA5,
) -> LsaLabStatus {
    guard(|| {
        let s = &handle(schedule, "schedule")?.0;
        let r = validate_a5(s, a, horizon).map_err(invalid)?;
        write(out, LsaLabA5 { minimal_c_alpha: r.minimal_c_alpha, bound: r.bound, passes: r.passes }, "out")
    })
}
