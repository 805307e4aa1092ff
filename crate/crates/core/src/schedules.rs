//! Step-size schedules and the regularity conditions used by the bounds.
//!
//! Schedules are indexed from `k = 1`; `α_0` is the natural extension of the
//! formula (for explicit lists it repeats the first entry).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("schedule increases at index {index}: α_{index} = {a:.6e} < α_{next} = {b:.6e}", next = index + 1)]
    NotNonIncreasing { index: u64, a: f64, b: f64 },
    #[error("schedule is not square summable")]
    NotSquareSummable,
    #[error("α_0 = {alpha0:.6e} must be below {limit:.6e}")]
    StepTooLarge { alpha0: f64, limit: f64 },
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `α_k = c / (k + n0)^t`.
    Polynomial { c: f64, n0: f64, t: f64 },
    /// `α_k = values[k-1]` for `1 ≤ k ≤ len`, zero afterwards.
    Explicit { values: Vec<f64> },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        match self {
            StepSchedule::Constant { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                Err(ScheduleError::Invalid(format!("constant step must be positive, got {alpha}")))
            }
            StepSchedule::Polynomial { c, n0, t } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(ScheduleError::Invalid(format!("c must be positive, got {c}")));
                }
                if !(*n0 >= 0.0 && n0.is_finite()) {
                    return Err(ScheduleError::Invalid(format!("n0 must be non-negative, got {n0}")));
                }
                if !(*t > 0.0 && *t <= 1.0) {
                    return Err(ScheduleError::Invalid(format!("t must lie in (0, 1], got {t}")));
                }
                Ok(())
            }
            StepSchedule::Explicit { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(ScheduleError::Invalid("explicit steps must be positive and finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `α_k` for `k ≥ 0`.
    pub fn alpha(&self, k: u64) -> f64 {
        match self {
            StepSchedule::Constant { alpha } => *alpha,
            StepSchedule::Polynomial { c, n0, t } => c / (k as f64 + n0).powf(*t),
            StepSchedule::Explicit { values } => {
                let i = k.max(1) as usize - 1;
                values.get(i).copied().unwrap_or(0.0)
            }
        }
    }

    /// `Σ_{ℓ=1}^{n} α_ℓ`.
    pub fn sum_alpha(&self, n: u64) -> f64 {
        match self {
            StepSchedule::Constant { alpha } => alpha * n as f64,
            _ => (1..=n).map(|k| self.alpha(k)).sum(),
        }
    }

    pub fn is_square_summable(&self) -> bool {
        match self {
            StepSchedule::Constant { .. } => false,
            StepSchedule::Polynomial { t, .. } => *t > 0.5,
            StepSchedule::Explicit { .. } => true,
        }
    }

    /// Last index with a positive step, if the schedule is eventually zero.
    fn support_end(&self) -> Option<u64> {
        match self {
            StepSchedule::Explicit { values } => Some(values.len() as u64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailSum {
    pub value: f64,
    pub truncation_bound: f64,
}

/// `𝒜_n = Σ_{ℓ≥n} α_ℓ²`.
///
/// Polynomial schedules use a direct partial sum followed by an
/// Euler–Maclaurin tail; `truncation_bound` bounds the remainder of that
/// expansion.
pub fn tail_sum_sq(s: &StepSchedule, n: u64) -> Result<TailSum, ScheduleError> {
    s.validate()?;
    match s {
        StepSchedule::Constant { .. } => Err(ScheduleError::NotSquareSummable),
        StepSchedule::Polynomial { c, n0, t } => {
            if *t <= 0.5 {
                return Err(ScheduleError::NotSquareSummable);
            }
            let sexp = 2.0 * t;
            let start = (1000.0 - n0).ceil().max(0.0) as u64;
            let big_n = n.max(start);
            let partial: f64 = (n..big_n).map(|k| s.alpha(k).powi(2)).sum();
            let x = big_n as f64 + n0;
            let c2 = c * c;
            let integral = c2 * x.powf(1.0 - sexp) / (sexp - 1.0);
            let f = c2 * x.powf(-sexp);
            let f1 = -sexp * c2 * x.powf(-sexp - 1.0);
            let f3 = -sexp * (sexp + 1.0) * (sexp + 2.0) * c2 * x.powf(-sexp - 3.0);
            let tail = integral + 0.5 * f - f1 / 12.0 + f3 / 720.0;
            let value = partial + tail;
            let truncation_bound = f3.abs() / 720.0 + 4.0 * f64::EPSILON * value;
            Ok(TailSum { value, truncation_bound })
        }
        StepSchedule::Explicit { values } => {
            let from = n.max(1) as usize - 1;
            let mut value: f64 = values.iter().skip(from).map(|v| v * v).sum();
            if n == 0 {
                value += values[0] * values[0];
            }
            Ok(TailSum { value, truncation_bound: 0.0 })
        }
    }
}

/// `𝒜_k` for `k = 0..=last`, obtained from one tail evaluation and backward accumulation.
fn tail_sums_upto(s: &StepSchedule, last: u64) -> Result<Vec<f64>, ScheduleError> {
    let mut out = vec![0.0; last as usize + 1];
    out[last as usize] = tail_sum_sq(s, last)?.value;
    for k in (0..last).rev() {
        out[k as usize] = out[k as usize + 1] + s.alpha(k).powi(2);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A5Report {
    /// Smallest `c_α` with `α_k/α_{k+1} ≤ 1 + c_α α_{k+1}` on the horizon.
    pub minimal_c_alpha: f64,
    pub argmax: u64,
    /// Closed-form supremum for polynomial schedules.
    pub analytic_sup: Option<f64>,
    pub bound: f64,
    pub passes: bool,
}

/// Scan of `(α_k/α_{k+1} − 1)/α_{k+1}` for `0 ≤ k < horizon`.
fn ratio_scan(s: &StepSchedule, horizon: u64) -> Result<(f64, u64), ScheduleError> {
    let end = s.support_end().map_or(horizon, |e| e.min(horizon));
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..end {
        let a = s.alpha(k);
        let b = s.alpha(k + 1);
        if b > a * (1.0 + 1e-15) {
            return Err(ScheduleError::NotNonIncreasing { index: k, a, b });
        }
        let r = if b > 0.0 { (a / b - 1.0) / b } else { f64::INFINITY };
        if r > best.0 {
            best = (r, k);
        }
    }
    Ok((best.0.max(0.0), best.1))
}

fn polynomial_sup(s: &StepSchedule) -> Option<f64> {
    match s {
        StepSchedule::Polynomial { c, n0, t } => {
            // (α_0/α_1 − 1)/α_1, the largest term since the ratio decreases in k
            let x = *n0;
            Some((((x + 1.0) / x).powf(*t) - 1.0) * (x + 1.0).powf(*t) / c)
        }
        _ => None,
    }
}

/// Checks `α_k/α_{k+1} ≤ 1 + c_α α_{k+1}` with `c_α ≤ a/16`.
pub fn validate_a5(s: &StepSchedule, a: f64, horizon: u64) -> Result<A5Report, ScheduleError> {
    s.validate()?;
    let (scan, argmax) = ratio_scan(s, horizon)?;
    let analytic_sup = polynomial_sup(s);
    let minimal_c_alpha = analytic_sup.map_or(scan, |v| v.max(scan));
    let bound = a / 16.0;
    Ok(A5Report { minimal_c_alpha, argmax, analytic_sup, bound, passes: minimal_c_alpha <= bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A6Status {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A6Report {
    pub status: A6Status,
    /// Smallest `c_α` meeting both the ratio condition and `α_k/𝒜_{k+1} ≤ (2/3)c_α`.
    pub minimal_c_alpha: f64,
    pub max_alpha_over_tail: f64,
    pub bound: f64,
}

/// Checks the square-summable regime: `c_α ≤ a/32`, `𝒜_0 < ∞` and `α_k/𝒜_{k+1} ≤ (2/3)c_α`.
pub fn validate_a6(s: &StepSchedule, a: f64, horizon: u64) -> Result<A6Report, ScheduleError> {
    s.validate()?;
    let bound = a / 32.0;
    if let StepSchedule::Constant { .. } = s {
        return Ok(A6Report {
            status: A6Status::NotApplicable,
            minimal_c_alpha: 0.0,
            max_alpha_over_tail: f64::NAN,
            bound,
        });
    }
    if !s.is_square_summable() {
        return Err(ScheduleError::NotSquareSummable);
    }
    let (scan, _) = ratio_scan(s, horizon)?;
    let end = s.support_end().map_or(horizon, |e| e.min(horizon));
    let tails = tail_sums_upto(s, end)?;
    let mut worst: f64 = 0.0;
    for k in 0..end {
        let r = s.alpha(k) / tails[k as usize + 1];
        worst = worst.max(if r.is_nan() { f64::INFINITY } else { r });
    }
    let a5 = polynomial_sup(s).map_or(scan, |v| v.max(scan));
    let minimal_c_alpha = a5.max(1.5 * worst);
    let status = if minimal_c_alpha <= bound && tails[0].is_finite() { A6Status::Pass } else { A6Status::Fail };
    Ok(A6Report { status, minimal_c_alpha, max_alpha_over_tail: worst, bound })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// `Σ_{j=0}^{N} α_j Π_{l=j+1}^{N}(1 − aα_l)` against `(1 − Π_{l=0}^{N}(1 − aα_l))/a`.
pub fn weighted_sum_identity(s: &StepSchedule, a: f64, n: u64) -> Result<IdentityCheck, ScheduleError> {
    s.validate()?;
    let alpha0 = s.alpha(0);
    if !(alpha0 < 1.0 / a) {
        return Err(ScheduleError::StepTooLarge { alpha0, limit: 1.0 / a });
    }
    let mut lhs = 0.0;
    let mut comp = 0.0;
    let mut prod = 1.0;
    for j in (0..=n).rev() {
        let term = s.alpha(j) * prod;
        // Neumaier summation
        let t = lhs + term;
        comp += if lhs.abs() >= term.abs() { (lhs - t) + term } else { (term - t) + lhs };
        lhs = t;
        prod *= 1.0 - a * s.alpha(j);
    }
    lhs += comp;
    let full: f64 = (0..=n).map(|l| (1.0 - a * s.alpha(l)).ln()).sum();
    let rhs = -full.exp_m1() / a;
    Ok(IdentityCheck { lhs, rhs, gap: (lhs - rhs).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedBoundCheck {
    pub c_alpha: f64,
    /// Largest `lhs/rhs` over `1 ≤ N ≤ n_max`.
    pub worst_ratio: f64,
    pub worst_n: u64,
    pub holds: bool,
}

/// Weighted sums `Σ_{k=1}^{N} α_kᵖ 𝒜_k^q Π_{j=k+1}^{N}(1 − bα_j) ≤ (2/b) α_N^{p−1} 𝒜_N^q`
/// for every `N ≤ n_max`. With `q = None` the `𝒜` factors are absent.
pub fn weighted_sum_bounds(
    s: &StepSchedule,
    b: f64,
    p: f64,
    q: Option<f64>,
    n_max: u64,
) -> Result<WeightedBoundCheck, ScheduleError> {
    s.validate()?;
    if !(p > 1.0 && p <= 2.0) {
        return Err(ScheduleError::HypothesisFailed(format!("p must lie in (1, 2], got {p}")));
    }
    let alpha0 = s.alpha(0);
    if !(alpha0 < 1.0 / (2.0 * b)) {
        return Err(ScheduleError::StepTooLarge { alpha0, limit: 1.0 / (2.0 * b) });
    }
    // α_k − α_{k+1} ≤ c_α α²_{k+1}
    let mut c_alpha: f64 = 0.0;
    for k in 0..n_max {
        let (x, y) = (s.alpha(k), s.alpha(k + 1));
        if y > x * (1.0 + 1e-15) {
            return Err(ScheduleError::NotNonIncreasing { index: k, a: x, b: y });
        }
        if y > 0.0 {
            c_alpha = c_alpha.max((x - y) / (y * y));
        }
    }
    let tails = match q {
        Some(qv) => {
            if !(0.0..=1.0).contains(&qv) {
                return Err(ScheduleError::HypothesisFailed(format!("q must lie in [0, 1], got {qv}")));
            }
            let t = tails_for(s, n_max)?;
            for k in 0..n_max {
                c_alpha = c_alpha.max(1.5 * s.alpha(k) / t[k as usize + 1]);
            }
            if c_alpha > b / 4.0 {
                return Err(ScheduleError::HypothesisFailed(format!(
                    "c_α = {c_alpha:.6e} exceeds b/4 = {:.6e}",
                    b / 4.0
                )));
            }
            if alpha0 > 1.0 / (2.0 * c_alpha) {
                return Err(ScheduleError::HypothesisFailed(format!("α_0 exceeds 1/(2c_α) = {:.6e}", 0.5 / c_alpha)));
            }
            Some(t)
        }
        None => {
            if c_alpha > b / 2.0 {
                return Err(ScheduleError::HypothesisFailed(format!(
                    "c_α = {c_alpha:.6e} exceeds b/2 = {:.6e}",
                    b / 2.0
                )));
            }
            None
        }
    };
    let weight = |k: u64| match (&tails, q) {
        (Some(t), Some(qv)) => t[k as usize].powf(qv),
        _ => 1.0,
    };
    let mut lhs = 0.0;
    let mut worst = (f64::NEG_INFINITY, 0);
    for n in 1..=n_max {
        let an = s.alpha(n);
        lhs = lhs * (1.0 - b * an) + an.powf(p) * weight(n);
        let rhs = 2.0 / b * an.powf(p - 1.0) * weight(n);
        let r = lhs / rhs;
        if r > worst.0 {
            worst = (r, n);
        }
    }
    Ok(WeightedBoundCheck { c_alpha, worst_ratio: worst.0, worst_n: worst.1, holds: worst.0 <= 1.0 + 1e-12 })
}

fn tails_for(s: &StepSchedule, n_max: u64) -> Result<Vec<f64>, ScheduleError> {
    if !s.is_square_summable() {
        return Err(ScheduleError::NotSquareSummable);
    }
    tail_sums_upto(s, n_max + 1)
}
