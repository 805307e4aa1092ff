use super::ConstantsError;
use crate::chains::DriftCertificate;
use std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdConstantsInputs {
    pub tau: usize,
    pub gamma: f64,
    pub lambda_trace: f64,
    /// Bound on the feature norms.
    pub c_psi: f64,
    /// Reward growth constant.
    pub c_rk: f64,
    pub beta: f64,
    pub k: f64,
}

/// Drift constants of the window chain `x_{0:τ}` built from a base certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDrift {
    pub tau: usize,
    pub beta0: f64,
    pub c0: f64,
    pub c_tilde: f64,
    pub c_p: f64,
    pub r1: f64,
    pub r2: f64,
    pub r_p: f64,
    pub b_p: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdConstants {
    pub window: WindowDrift,
    pub cbar_a: f64,
    pub cbar_bk: f64,
}

const GOLDEN_TOL: f64 = 1e-12;

/// Infimum of `β ∈ (1/(2τ), 1/τ)` with `(1 − τβ)(τβc)^δ ≤ β`.
///
/// The left side minus `β` is strictly decreasing on the interval, so the
/// infimum is either the left endpoint or the unique root.
fn beta0(tau: f64, c: f64, delta: f64) -> Result<f64, ConstantsError> {
    let g = |b: f64| (1.0 - tau * b) * (tau * b * c).powf(delta) - b;
    let (mut lo, mut hi) = (0.5 / tau, 1.0 / tau);
    if g(lo) <= 0.0 {
        return Ok(lo);
    }
    if !(g(hi) < 0.0) {
        return Err(ConstantsError::NoFeasibleBeta);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(hi)
}

/// `inf{r > 0 : r − k r^δ − ln b > 0}` for `k > 0`; the function is convex in `r`.
fn first_crossing(k: f64, delta: f64, log_b: f64) -> f64 {
    let f = |r: f64| r - k * r.powf(delta) - log_b;
    if f(f64::MIN_POSITIVE) > 0.0 {
        return 0.0;
    }
    if delta >= 1.0 {
        return if k < 1.0 { log_b / (1.0 - k) } else { f64::INFINITY };
    }
    // locate the minimiser, then a point past the root
    let r_min = (k * delta).powf(1.0 / (1.0 - delta));
    let mut lo = r_min;
    let mut hi = (2.0 * r_min).max(1.0);
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    if f(lo) > 0.0 {
        lo = 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    hi
}

/// Supremum of `g` over `(0, r_max)`: a quadratically spaced scan followed by golden-section
/// refinement around the best scan point, with both endpoints as candidates.
fn sup_on_interval(g: impl Fn(f64) -> f64, r_max: f64) -> f64 {
    let n = 256;
    let grid: Vec<f64> = (0..=n)
        .map(|i| if i == 0 { 0.0 } else { r_max * (i as f64 / n as f64).powi(2) })
        .collect();
    let (best_i, mut best) = grid
        .iter()
        .map(|&r| g(r))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let mut lo = grid[best_i.saturating_sub(1)];
    let mut hi = grid[(best_i + 1).min(n)];
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while hi - lo > GOLDEN_TOL * hi.max(1.0) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = g(x1);
        }
    }
    best = best.max(f1).max(f2);
    best
}

pub fn window_drift(base: &DriftCertificate, tau: usize) -> Result<WindowDrift, ConstantsError> {
    if tau < 1 {
        return Err(ConstantsError::RangeViolation("tau must be at least 1".into()));
    }
    let tau_f = tau as f64;
    let (c, delta, b) = (base.c, base.delta, base.b);
    let mut warnings = Vec::new();

    let beta0 = beta0(tau_f, c, delta)?;
    let c0 = beta0 * c;
    let c_tilde = (1.0 - tau_f * beta0) * c;
    let c_p = c_tilde / 2.0;
    let r1 = first_crossing(c_tilde + tau_f * c0, delta, b.ln());
    let r2 = (2.0 * 2f64.ln() / c_tilde).powf(1.0 / delta);
    let r_p = r1.max(r2);
    let b_p = if r_p.is_finite() {
        sup_on_interval(|r| (-c_tilde * r.powf(delta) + r).exp() + b * (beta0 * c * r.powf(delta)).exp(), r_p)
    } else {
        warnings.push("R_1 is infinite; the window drift constants are unbounded".into());
        f64::INFINITY
    };
    Ok(WindowDrift { tau, beta0, c0, c_tilde, c_p, r1, r2, r_p, b_p, warnings })
}

/// Window drift constants together with the TD moment constants.
pub fn td_constants(base: &DriftCertificate, inp: &TdConstantsInputs) -> Result<TdConstants, ConstantsError> {
    if !(inp.gamma > 0.0 && inp.gamma < 1.0) {
        return Err(ConstantsError::RangeViolation(format!("gamma must lie in (0,1), got {}", inp.gamma)));
    }
    if !(inp.lambda_trace >= 0.0 && inp.lambda_trace < 1.0) {
        return Err(ConstantsError::RangeViolation(format!(
            "trace parameter must lie in [0,1), got {}",
            inp.lambda_trace
        )));
    }
    for (name, v) in [("C_psi", inp.c_psi), ("C_RK", inp.c_rk), ("beta", inp.beta), ("K", inp.k)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConstantsError::RangeViolation(format!("{name} must be non-negative, got {v}")));
        }
    }
    let window = window_drift(base, inp.tau)?;
    let lg = 1.0 - inp.lambda_trace * inp.gamma;
    Ok(TdConstants {
        window,
        cbar_a: (1.0 + inp.gamma) * inp.c_psi.powi(2) / lg,
        cbar_bk: inp.c_rk * inp.c_psi * (inp.beta * inp.k / E).powf(inp.beta / 2.0) / lg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn base(c: f64, delta: f64, b: f64) -> DriftCertificate {
        DriftCertificate::new(Arc::new(|_| 1.0), c, b, delta, 1.0).unwrap()
    }

    fn inputs(tau: usize) -> TdConstantsInputs {
        TdConstantsInputs { tau, gamma: 0.9, lambda_trace: 0.5, c_psi: 1.0, c_rk: 1.0, beta: 0.0, k: 8.0 }
    }

    #[test]
    fn beta0_matches_grid() {
        let t = td_constants(&base(0.5, 1.0, 3.0), &inputs(1)).unwrap().window;
        let grid_min = (1..100_000)
            .map(|i| 0.5 + 0.5 * i as f64 / 100_000.0)
            .find(|&b| (1.0 - b) * (b * 0.5) <= b)
            .unwrap();
        assert!((t.beta0 - grid_min).abs() <= 1e-5);
    }

    #[test]
    fn cbar_a_direct() {
        let t = td_constants(&base(0.5, 1.0, 3.0), &inputs(2)).unwrap();
        assert!((t.cbar_a - 1.9 / 0.55).abs() < 1e-12);
        assert!(t.window.c_p < 0.25);
    }

    #[test]
    fn r1_is_a_crossing() {
        let t = window_drift(&base(0.4, 0.75, 20.0), 3).unwrap();
        let k = t.c_tilde + 3.0 * t.c0;
        let f = |r: f64| r - k * r.powf(0.75) - 20f64.ln();
        assert!(f(t.r1 * (1.0 + 1e-9)) > 0.0);
        assert!(f(t.r1 * (1.0 - 1e-6)) <= 0.0);
        assert!(t.b_p.is_finite() && t.b_p >= 1.0 + 20.0);
    }
}
