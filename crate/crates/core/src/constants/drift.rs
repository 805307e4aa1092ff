use super::ConstantsError;
use crate::chains::{DriftCertificate, SuperlevelInf};

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicScalars {
    pub lambda: f64,
    /// `sup_{r>0}(c r^δ − r)`.
    pub sup_term: f64,
    pub b_tilde: f64,
    pub b_prime: f64,
    pub warnings: Vec<String>,
}

/// `sup_{r>0}(c r^δ − r)`: attained at `r* = (cδ)^{1/(1−δ)}` for `δ < 1`;
/// for `δ = 1` it is `0` when `c ≤ 1` and `+∞` otherwise.
pub fn sup_power_gap(c: f64, delta: f64) -> f64 {
    if delta >= 1.0 {
        return if c <= 1.0 { 0.0 } else { f64::INFINITY };
    }
    let r = (c * delta).powf(1.0 / (1.0 - delta));
    c * r.powf(delta) - r
}

pub fn ergodic_scalars(cert: &DriftCertificate) -> ErgodicScalars {
    let mut warnings = Vec::new();
    let lambda = match cert.superlevel_inf {
        SuperlevelInf::Empty => (-cert.c).exp(),
        SuperlevelInf::At(w) => (-cert.c * w.max(1.0).powf(cert.delta)).exp(),
    };
    let sup_term = sup_power_gap(cert.c, cert.delta);
    if sup_term.is_infinite() {
        warnings.push(format!("b_tilde is infinite: delta = 1 with c = {} > 1", cert.c));
    }
    ErgodicScalars {
        lambda,
        sup_term,
        b_tilde: cert.b.ln() + sup_term,
        b_prime: (cert.b / (1.0 - lambda)).ln() + sup_term,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyDrift {
    pub gamma: f64,
    pub r_gamma: f64,
    pub c_gamma: f64,
    pub b_gamma: f64,
}

/// Constants of the polynomial drift `P W^{γ+1−δ} ≤ W^{γ+1−δ} − c_γ W^γ + b_γ 1{W ≤ R_γ}`.
pub fn poly_drift_constants(cert: &DriftCertificate, gamma: f64) -> Result<PolyDrift, ConstantsError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ConstantsError::RangeViolation(format!("gamma must be positive, got {gamma}")));
    }
    let (c, delta, b, r0) = (cert.c, cert.delta, cert.b, cert.r0);
    let g = gamma + 1.0 - delta;
    if gamma <= delta {
        return Ok(PolyDrift {
            gamma,
            r_gamma: r0,
            c_gamma: (g * c).min(1.0),
            b_gamma: b.ln().max(0.0).powf(g),
        });
    }
    let third = if delta < 1.0 {
        c.powf(1.0 / (delta - 1.0))
    } else if c < 1.0 {
        0.0
    } else if c == 1.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let r_gamma = r0.max((2.0 * g / c).powf(1.0 / delta)).max(third);
    let shift = (gamma - delta).exp();
    let log_arg = (b + shift).ln().max(r_gamma + shift);
    let b_gamma = log_arg.powf(g);
    let c_gamma = (g * (1.0 - c * r_gamma.powf(delta - 1.0) / 2.0).powf(gamma - delta) * (c / 2.0)).min(1.0);
    Ok(PolyDrift { gamma, r_gamma, c_gamma, b_gamma })
}

fn small_set(cert: &DriftCertificate, radius: f64) -> Result<(f64, f64), ConstantsError> {
    cert.small_sets
        .as_ref()
        .and_then(|s| s.lookup(radius))
        .map(|(m, eps)| (m as f64, eps))
        .ok_or(ConstantsError::MissingSmallSet { radius })
}

/// `ψ(γ̃) = 8 ε_{R̃}{b_γ̃/c_γ̃ · m_{R̃} + R̃^{γ+1−δ}} + 2[b_{γ̃+1−δ}/c_{γ̃+1−δ} + 1]`
/// with `R̃ = (2b_γ̃/c_γ̃)^{1/γ̃} ∨ R_γ̃`.
pub fn psi(cert: &DriftCertificate, gamma: f64, gamma_tilde: f64) -> Result<f64, ConstantsError> {
    let pd = poly_drift_constants(cert, gamma_tilde)?;
    let radius = (2.0 * pd.b_gamma / pd.c_gamma).powf(1.0 / gamma_tilde).max(pd.r_gamma);
    let (m, eps) = small_set(cert, radius)?;
    let next = poly_drift_constants(cert, gamma_tilde + 1.0 - cert.delta)?;
    Ok(8.0 * eps * (pd.b_gamma / pd.c_gamma * m + radius.powf(gamma + 1.0 - cert.delta))
        + 2.0 * (next.b_gamma / next.c_gamma + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rosenthal {
    pub p: f64,
    pub gamma: f64,
    pub c_f: f64,
    pub c_w: f64,
    pub c_ros: f64,
}

/// Rosenthal constant for additive functionals bounded by `W^γ`.
pub fn rosenthal_constants(cert: &DriftCertificate, p: f64, gamma: f64) -> Result<Rosenthal, ConstantsError> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(ConstantsError::RangeViolation(format!("Rosenthal exponent must be at least 2, got {p}")));
    }
    let pg = p * (gamma + 1.0 - cert.delta);
    let c_f = psi(cert, gamma, gamma)?;
    let c_w = psi(cert, gamma, pg)?;
    let c_g = poly_drift_constants(cert, gamma)?.c_gamma;
    let top = poly_drift_constants(cert, pg)?;
    let c_ros = 6f64.powf(p) * c_f.powf(p) * (c_w + top.b_gamma / (c_g.powf(p) * top.c_gamma)) * (p.powf(p) + 2.0)
        / (c_g * top.c_gamma);
    Ok(Rosenthal { p, gamma, c_f, c_w, c_ros })
}

/// `φ(τ̃) = 8 ε_{R_τ̃}{b^{1/τ̃}/(1−λ^{1/τ̃}) m_{R_τ̃} + 2b^{1/τ̃}/(1−λ^{1/τ̃})} + 2[b/(1−λ) + 1]`
/// with `R_τ̃ = log(R0) ∨ log[2^τ̃ b/(1−λ^{1/τ̃})^τ̃]`.
pub fn phi(cert: &DriftCertificate, tau: f64) -> Result<f64, ConstantsError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ConstantsError::RangeViolation(format!("tau must be positive, got {tau}")));
    }
    let lambda = ergodic_scalars(cert).lambda;
    let lt = lambda.powf(1.0 / tau);
    let radius = cert.r0.ln().max(tau * 2f64.ln() + cert.b.ln() - tau * (1.0 - lt).ln());
    let (m, eps) = small_set(cert, radius)?;
    let q = cert.b.powf(1.0 / tau) / (1.0 - lt);
    Ok(8.0 * eps * (q * m + 2.0 * q) + 2.0 * (cert.b / (1.0 - lambda) + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosenthalV {
    pub p: f64,
    pub c_f: f64,
    pub c_w: f64,
    pub d_ros: f64,
}

/// Rosenthal constant for additive functionals bounded by `V^{1/p}`.
pub fn rosenthal_constants_v(cert: &DriftCertificate, p: f64) -> Result<RosenthalV, ConstantsError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(ConstantsError::RangeViolation(format!("exponent must be at least 1, got {p}")));
    }
    let lambda = ergodic_scalars(cert).lambda;
    let c_f = phi(cert, p)?;
    let c_w = phi(cert, 1.0)?;
    let d_ros = 6f64.powf(p) * c_f.powf(p) * (c_w + cert.b / (1.0 - lambda)) * (p.powf(p) + 2.0)
        / ((1.0 - lambda) * (1.0 - lambda.powf(1.0 / p)));
    Ok(RosenthalV { p, c_f, c_w, d_ros })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn cert(c: f64, b: f64, delta: f64, r0: f64) -> DriftCertificate {
        DriftCertificate::new(Arc::new(|_| 1.0), c, b, delta, r0).unwrap()
    }

    #[test]
    fn sqrt_gap() {
        assert!((sup_power_gap(1.0, 0.5) - 0.25).abs() < 1e-15);
        let s = ergodic_scalars(&cert(1.0, std::f64::consts::E, 0.75, 1.0));
        let r: f64 = 0.75f64.powi(4);
        assert!((s.b_tilde - (1.0 + r.powf(0.75) - r)).abs() < 1e-15);
    }

    #[test]
    fn linear_gap_cases() {
        let s = ergodic_scalars(&cert(0.25, 3.0, 1.0, 1.0));
        assert_eq!(s.b_tilde, 3f64.ln());
        let s = ergodic_scalars(&cert(2.0, 3.0, 1.0, 1.0));
        assert!(s.b_tilde.is_infinite() && !s.warnings.is_empty());
    }

    #[test]
    fn lambda_below_exp_minus_c() {
        for r0 in [0.0, 0.5, 1.0, 4.0] {
            let s = ergodic_scalars(&cert(0.3, 5.0, 0.75, r0));
            assert!(s.lambda <= (-0.3f64).exp());
        }
    }

    #[test]
    fn first_branch_examples() {
        let p = poly_drift_constants(&cert(0.5, 10.0, 1.0, 3.0), 1.0).unwrap();
        assert_eq!((p.c_gamma, p.r_gamma), (0.5, 3.0));
        let p = poly_drift_constants(&cert(0.5, std::f64::consts::E, 1.0, 3.0), 1.0).unwrap();
        assert!((p.b_gamma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn missing_small_set() {
        let r = rosenthal_constants(&cert(0.5, 3.0, 1.0, 1.0), 2.0, 0.5);
        assert!(matches!(r, Err(ConstantsError::MissingSmallSet { .. })));
    }
}
