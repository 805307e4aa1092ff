use super::drift::{ergodic_scalars, rosenthal_constants, rosenthal_constants_v, ErgodicScalars, Rosenthal};
use super::ConstantsError;
use crate::chains::DriftCertificate;
use crate::linalg::{solve_lyapunov, spectral_norm, Matrix};
use std::f64::consts::E;

/// Scalars derived from the mean matrix `A` and its Lyapunov solution.
#[derive(Debug, Clone)]
pub struct MatrixData {
    pub d: usize,
    pub q: Matrix,
    pub kappa_q: f64,
    pub a: f64,
    pub norm_a: f64,
    pub norm_a_q: f64,
    /// `‖Q‖`, the largest eigenvalue of `Q`.
    pub norm_q: f64,
}

impl MatrixData {
    pub fn from_matrix(a: &Matrix) -> Result<Self, ConstantsError> {
        let sol = solve_lyapunov(a)?;
        Ok(Self {
            d: a.nrows(),
            kappa_q: sol.kappa_q,
            a: sol.a,
            norm_a: spectral_norm(a),
            norm_a_q: sol.q_norm_a,
            norm_q: sol.lambda_max_q,
            q: sol.q,
        })
    }
}

#[derive(Debug, Clone)]
pub struct StabilityInputs {
    pub matrix: MatrixData,
    /// Exponent `β` of the growth bound `‖Ā(z) − A‖ ≤ C_A W^β(z)`.
    pub beta: f64,
    pub c_a: f64,
    pub epsilon: f64,
    pub p: f64,
    /// Conditioning horizon in the `λ^{m/(2p)}` factor of `C_{st,p}`.
    pub m: f64,
}

impl StabilityInputs {
    pub fn new(matrix: MatrixData, beta: f64, c_a: f64, p: f64) -> Self {
        Self { matrix, beta, c_a, epsilon: 0.5, p, m: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityConstants {
    pub p: f64,
    pub scalars: ErgodicScalars,
    pub c0: f64,
    pub c1: f64,
    pub c2p: f64,
    pub r_a: f64,
    pub p_tilde: f64,
    pub rosenthal: Rosenthal,
    pub h: f64,
    /// Logarithms of the seven candidates whose minimum is `α_{∞,p}`.
    pub log_alpha_terms: [f64; 7],
    pub log_alpha_inf: f64,
    pub alpha_inf: f64,
    pub c_st: f64,
    pub warnings: Vec<String>,
}

fn check_stability_inputs(cert: &DriftCertificate, s: &StabilityInputs) -> Result<(), ConstantsError> {
    let range = |msg: String| Err(ConstantsError::RangeViolation(msg));
    if !(s.epsilon > 0.0 && s.epsilon < 1.0) {
        return range(format!("epsilon must lie in (0,1), got {}", s.epsilon));
    }
    let beta_max = (2.0 * cert.delta - 1.0).min(cert.delta / (1.0 + s.epsilon));
    if !(s.beta > 0.0 && s.beta < beta_max) {
        return range(format!("beta must lie in (0, {beta_max}), got {}", s.beta));
    }
    if !(s.c_a >= 0.0 && s.c_a.is_finite()) {
        return range(format!("C_A must be non-negative, got {}", s.c_a));
    }
    if !(s.p >= 1.0 && s.p.is_finite()) {
        return range(format!("p must be at least 1, got {}", s.p));
    }
    if !(s.m >= 0.0) {
        return range(format!("m must be non-negative, got {}", s.m));
    }
    Ok(())
}

/// `r_A = min{s ≥ 0 : β ≤ 2δ − 1 − (1−δ)/s}`.
fn r_a(beta: f64, delta: f64) -> f64 {
    if delta >= 1.0 {
        0.0
    } else {
        (1.0 - delta) / (2.0 * delta - 1.0 - beta)
    }
}

/// `C̄_A = ‖A‖ + d·C_A·(βK/e)^β·(1 + b/(1−λ))^{1/K}`, the bound on `‖Ā(z)‖` in `V^{1/K}`-norm.
/// Holds for `β = 0` too, where the growth factor is 1.
pub fn cbar_a(cert: &DriftCertificate, md: &MatrixData, c_a: f64, beta: f64, k: f64) -> f64 {
    let lambda = ergodic_scalars(cert).lambda;
    let growth = (beta * k / E).powf(beta);
    md.norm_a + md.d as f64 * c_a * growth * (1.0 + cert.b / (1.0 - lambda)).powf(1.0 / k)
}

/// Constants of the exponential stability bound for the random matrix products.
pub fn stability_constants(cert: &DriftCertificate, s: &StabilityInputs) -> Result<StabilityConstants, ConstantsError> {
    check_stability_inputs(cert, s)?;
    let md = &s.matrix;
    let scalars = ergodic_scalars(cert);
    let mut warnings = scalars.warnings.clone();
    let (a, d, lambda) = (md.a, md.d as f64, scalars.lambda);
    let sk = md.kappa_q.sqrt();

    let c0 = 0.5 * sk * md.norm_a.powi(2) * (md.norm_a + a).exp();
    let c1 = (sk * d * a.exp() * s.c_a).powf(1.0 + s.epsilon) / (1.0 + s.epsilon);
    let r_a = r_a(s.beta, cert.delta);
    let p_tilde = s.p.max(r_a / 4.0);
    let rosenthal = rosenthal_constants(cert, 4.0 * p_tilde, s.beta)?;
    let c2p = sk * a.exp() * d * s.c_a * (4.0 * rosenthal.c_ros).powf(1.0 / (4.0 * p_tilde));

    let h = (12.0 * c2p * (scalars.b_tilde - (1.0 - lambda).ln()) / a).powi(2).ceil().max(1.0);
    if !h.is_finite() {
        warnings.push("block size h is infinite".into());
    }
    let ln2 = 2f64.ln();
    let log_alpha_terms = [
        -a.ln(),
        -h.ln(),
        -(2.0 * md.norm_a_q.powi(2) * md.norm_q).ln(),
        a.ln() - (12.0 * h * c0).ln(),
        (a.ln() - (12.0 * c1).ln() - h * ln2) / s.epsilon,
        (cert.c.min(0.5).ln() - (2.0 * s.p * c1).ln() - h * ln2) / (1.0 + s.epsilon),
        cert.c.min(1.0).ln() - (4.0 * s.p * c2p * h.sqrt()).ln(),
    ];
    let log_alpha_inf = log_alpha_terms.iter().cloned().fold(f64::INFINITY, f64::min);
    let alpha_inf = log_alpha_inf.exp();
    if alpha_inf == 0.0 {
        warnings.push(format!("alpha_inf underflows; log(alpha_inf) = {log_alpha_inf:.6e}"));
    }
    // α∞ carries a 2^{-h} factor, so α∞·h tends to 0 as h grows without bound
    let alpha_h = if h.is_finite() { (log_alpha_inf + h.ln()).exp() } else { 0.0 };
    let two_p = 2.0 * s.p;
    let c_st = sk
        * (1.25 * a * alpha_h).exp()
        * (lambda.powf(s.m / two_p) + (cert.b / (1.0 - lambda)).powf(1.0 / two_p));

    Ok(StabilityConstants {
        p: s.p,
        scalars,
        c0,
        c1,
        c2p,
        r_a,
        p_tilde,
        rosenthal,
        h,
        log_alpha_terms,
        log_alpha_inf,
        alpha_inf,
        c_st,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct LsaInputs {
    pub stability: StabilityInputs,
    pub c_bk: f64,
    pub k: f64,
    pub theta_star_norm: f64,
    /// `‖b‖` of the mean right-hand side.
    pub b_norm: f64,
    pub c_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationConstants {
    pub const_s: f64,
    pub const_b: f64,
    pub const_1: f64,
    pub const_2: f64,
    pub const_3: f64,
    pub const_4: f64,
    pub const_5: f64,
    pub const_j1f: f64,
    pub const_j1d: f64,
    pub const_h1f: f64,
    pub const_h1d: f64,
    pub cf: f64,
    pub cd: f64,
}

#[derive(Debug, Clone)]
pub struct LsaConstants {
    pub p: f64,
    /// Stability constants evaluated at `2p`.
    pub stability_2p: StabilityConstants,
    pub log_alpha_inf0: f64,
    pub alpha_inf0: f64,
    pub log_alpha_inf1: f64,
    pub alpha_inf1: f64,
    pub cbar_a: f64,
    pub cbar_b: f64,
    pub cbar_eps: f64,
    pub c_eps: f64,
    pub d_ros_p: f64,
    pub d_ros_4p: f64,
    pub const_j0: f64,
    pub const_j0_4p: f64,
    pub const_h0: f64,
    pub separation: Option<SeparationConstants>,
    pub warnings: Vec<String>,
}

/// Constant chain of the fluctuation and higher-order error bounds.
///
/// The Rosenthal constant for functionals bounded by `V^{1/K}` is taken to be
/// the `V^{1/p}` constant `D_ros(p)`, which dominates it since `p ≤ K`.
pub fn lsa_constants(cert: &DriftCertificate, inputs: &LsaInputs) -> Result<LsaConstants, ConstantsError> {
    let p = inputs.stability.p;
    let k = inputs.k;
    if !(k >= 8.0 && p >= 2.0 && p <= k / 4.0) {
        return Err(ConstantsError::RangeViolation(format!("need K >= 8 and 2 <= p <= K/4, got K = {k}, p = {p}")));
    }
    for (name, v) in [
        ("C_bK", inputs.c_bk),
        ("theta_star_norm", inputs.theta_star_norm),
        ("b_norm", inputs.b_norm),
        ("c_alpha", inputs.c_alpha),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(ConstantsError::RangeViolation(format!("{name} must be non-negative, got {v}")));
        }
    }
    let erg = cert.ergodicity.ok_or(ConstantsError::MissingErgodicity)?;

    let mut st_in = inputs.stability.clone();
    st_in.p = 2.0 * p;
    let st = stability_constants(cert, &st_in)?;
    let mut warnings = st.warnings.clone();
    let md = &inputs.stability.matrix;
    let (a, d, lambda) = (md.a, md.d as f64, st.scalars.lambda);
    let (beta, c_a, c_alpha) = (inputs.stability.beta, inputs.stability.c_a, inputs.c_alpha);

    let log_alpha_inf0 = st.log_alpha_inf.min(erg.rho.ln()).min(-1.0);
    let log_alpha_inf1 = if c_alpha > 0.0 { log_alpha_inf0.min(-(2.0 * c_alpha).ln()) } else { log_alpha_inf0 };
    let alpha_inf1 = log_alpha_inf1.exp();

    let growth = (beta * k / E).powf(beta);
    let v_mass = (1.0 + cert.b / (1.0 - lambda)).powf(1.0 / k);
    let cbar_a = cbar_a(cert, md, c_a, beta, k);
    let cbar_b = inputs.b_norm + d * inputs.c_bk * v_mass;
    let cbar_eps = cbar_a * inputs.theta_star_norm + cbar_b;
    let c_eps = d.sqrt() * inputs.c_bk + 2.0 * d * growth * c_a * inputs.theta_star_norm;

    let d_ros_p = rosenthal_constants_v(cert, p)?.d_ros;
    let d_ros_4p = rosenthal_constants_v(cert, 4.0 * p)?.d_ros;
    let kappa = md.kappa_q.sqrt();
    let j0_core = d * kappa * c_eps * (2.0 + 4.0 * (c_alpha + 2.0 * md.norm_a) / a + 2.0 / a.sqrt());
    let const_j0 = j0_core * d_ros_p.powf(1.0 / p);
    let const_j0_4p = j0_core * d_ros_4p.powf(1.0 / (4.0 * p));
    let const_h0 = 16.0 * (1.0 + alpha_inf1 * c_alpha).sqrt() * st.c_st * const_j0_4p * cbar_a / a;

    let separation = if k >= 32.0 && p <= k / 16.0 {
        let kq = md.kappa_q;
        let sk = kq.sqrt();
        let ln_inv_rho = -erg.rho.ln();
        let const_s = 24.0 * kq * d * d_ros_p.powf(1.0 / p) * (c_a + md.norm_a) * md.norm_a;
        let const_b = d.powf(1.5)
            * (2.0 * erg.b_v * c_eps / (1.0 - erg.rho).sqrt() + 2.0 * cbar_eps * 18.0 * 2f64.sqrt() * p);
        let const_1 = 8.0 / (a * a) * cbar_eps * const_s * sk;
        let const_2 = 4.0 / a * const_b * const_s * sk;
        let const_3 = 8.0 / a * sk * const_s * cbar_eps * erg.b_v.powf(1.0 / (4.0 * p));
        let const_4 = 2.0 * const_1
            + 2.0 * E.sqrt() * const_2 / a
            + (2.0 * std::f64::consts::PI).sqrt() * E * const_3 / a.powf(1.5);
        let const_5 = (3.0 * const_1 + 2.0 * const_2 / a.sqrt() + 4.0 * const_3 / a) * (c_alpha.sqrt() + 1.0);
        let const_j1f = 2.0 * p.sqrt() * const_4 / ln_inv_rho.sqrt();
        let const_j1d = 2.0 * p.sqrt() * const_5 / ln_inv_rho;
        let const_h1f = 8.0 * const_j1f * cbar_a * st.c_st / a;
        let const_h1d = 16.0 * const_j1d * cbar_a * st.c_st * (1.0 + c_alpha * alpha_inf1) / a;
        Some(SeparationConstants {
            const_s,
            const_b,
            const_1,
            const_2,
            const_3,
            const_4,
            const_5,
            const_j1f,
            const_j1d,
            const_h1f,
            const_h1d,
            cf: const_h1f + const_j1f,
            cd: const_h1d + const_j1d,
        })
    } else {
        warnings.push(format!("higher-order constants need K >= 32 and p <= K/16 (K = {k}, p = {p})"));
        None
    };

    Ok(LsaConstants {
        p,
        stability_2p: st,
        log_alpha_inf0,
        alpha_inf0: log_alpha_inf0.exp(),
        log_alpha_inf1,
        alpha_inf1,
        cbar_a,
        cbar_b,
        cbar_eps,
        c_eps,
        d_ros_p,
        d_ros_4p,
        const_j0,
        const_j0_4p,
        const_h0,
        separation,
        warnings,
    })
}
