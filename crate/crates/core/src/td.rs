//! Temporal-difference policy evaluation with τ-truncated eligibility traces,
//! expressed as a linear stochastic approximation on the window chain.

use crate::chains::{finite_chain, window_chain, ChainError, ChainState, DriftCertificate, MarkovModel, StateFn};
use crate::constants::{ConstantsError, WindowDrift};
use crate::linalg::{spectral_abscissa, sym_eigen_extremes, Matrix, Vector};
use crate::lsa::{build_model, Averaging, LsaError, LsaModel, MatrixFn, VectorFn};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Slack allowed below the quadratic-form lower bound.
pub const HURWITZ_BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdError {
    #[error("window has length {got}, expected {expected}")]
    WindowLengthMismatch { expected: usize, got: usize },
    #[error("invalid TD configuration: {0}")]
    InvalidConfig(String),
    #[error("lower bound violated: lambda_min(sym A) = {} < {}", .0.lambda_min_sym, .0.bound)]
    BoundViolated(HurwitzReport),
    #[error("cannot read reward process files: {0}")]
    Input(String),
    #[error(transparent)]
    Lsa(#[from] LsaError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
}

pub type RewardFn = Arc<dyn Fn(&ChainState) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Mrp {
    pub chain: MarkovModel,
    pub reward: RewardFn,
    pub gamma: f64,
}

impl std::fmt::Debug for Mrp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mrp").field("chain", &self.chain.description()).field("gamma", &self.gamma).finish()
    }
}

impl Mrp {
    pub fn new(chain: MarkovModel, reward: RewardFn, gamma: f64) -> Result<Self, TdError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(TdError::InvalidConfig(format!("gamma must lie in (0,1), got {gamma}")));
        }
        Ok(Self { chain, reward, gamma })
    }

    pub fn finite(kernel: &Matrix, reward: Vec<f64>, gamma: f64) -> Result<Self, TdError> {
        if reward.len() != kernel.nrows() {
            return Err(TdError::InvalidConfig(format!(
                "reward has {} entries for {} states",
                reward.len(),
                kernel.nrows()
            )));
        }
        let r: RewardFn = Arc::new(move |z| reward[z.finite_index().expect("finite state")]);
        Self::new(finite_chain(kernel)?, r, gamma)
    }

    /// `(I − γQ)⁻¹R` for finite MRPs.
    pub fn value_function(&self) -> Option<Vector> {
        let q = self.chain.exact_kernel()?;
        let n = q.nrows();
        let r = Vector::from_iterator(n, (0..n).map(|i| (self.reward)(&ChainState::Finite(i))));
        (Matrix::identity(n, n) - q * self.gamma).lu().solve(&r)
    }
}

#[derive(Clone)]
pub struct FeatureMap {
    pub psi: VectorFn,
    pub dim: usize,
}

impl FeatureMap {
    /// Row `i` of `phi` is the feature vector of state `i`.
    pub fn from_matrix(phi: &Matrix) -> Self {
        let phi = phi.clone();
        let dim = phi.ncols();
        Self {
            psi: Arc::new(move |z| phi.row(z.finite_index().expect("finite state")).transpose()),
            dim,
        }
    }

    pub fn one_hot(states: usize) -> Self {
        Self::from_matrix(&Matrix::identity(states, states))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdConfig {
    pub lambda_trace: f64,
    pub tau: usize,
}

impl TdConfig {
    fn validate(&self, gamma: f64) -> Result<(), TdError> {
        if self.tau < 1 {
            return Err(TdError::InvalidConfig("tau must be at least 1".into()));
        }
        if !(self.lambda_trace >= 0.0 && self.lambda_trace < 1.0 && self.lambda_trace * gamma < 1.0) {
            return Err(TdError::InvalidConfig(format!("trace parameter {} not in [0,1)", self.lambda_trace)));
        }
        Ok(())
    }
}

/// `φ_τ = Σ_{s<τ} (λγ)^s ψ(x_{τ−1−s})` over the window `x_{0:τ−1}`.
pub fn eligibility(window: &[ChainState], cfg: &TdConfig, gamma: f64, features: &FeatureMap) -> Result<Vector, TdError> {
    if window.len() != cfg.tau {
        return Err(TdError::WindowLengthMismatch { expected: cfg.tau, got: window.len() });
    }
    Ok(trace(window, cfg.lambda_trace * gamma, features))
}

fn trace(window: &[ChainState], decay: f64, features: &FeatureMap) -> Vector {
    let mut phi = Vector::zeros(features.dim);
    let mut w = 1.0;
    for x in window.iter().rev() {
        phi += (features.psi)(x) * w;
        w *= decay;
    }
    phi
}

/// TD(λ) with truncation `τ` as an LSA model on the window chain `x_{0:τ}`.
pub fn build_td_model(mrp: &Mrp, features: &FeatureMap, cfg: &TdConfig, averaging: &Averaging) -> Result<LsaModel, TdError> {
    cfg.validate(mrp.gamma)?;
    let tau = cfg.tau;
    let decay = cfg.lambda_trace * mrp.gamma;
    let gamma = mrp.gamma;
    let chain = window_chain(&mrp.chain, tau)?;

    let f = features.clone();
    let abar: MatrixFn = Arc::new(move |z| {
        let w = z.window().expect("window state");
        let phi = trace(&w[..tau], decay, &f);
        let diff = (f.psi)(&w[tau - 1]) - (f.psi)(&w[tau]) * gamma;
        phi * diff.transpose()
    });
    let f = features.clone();
    let reward = mrp.reward.clone();
    let bbar: VectorFn = Arc::new(move |z| {
        let w = z.window().expect("window state");
        trace(&w[..tau], decay, &f) * reward(&w[tau - 1])
    });
    Ok(build_model(chain, abar, bbar, averaging)?)
}

/// `E_{π₀}[ψψᵀ]` under the stationary law of a finite state chain.
pub fn feature_covariance(chain: &MarkovModel, features: &FeatureMap) -> Result<Matrix, TdError> {
    let (states, weights) = chain.stationary_weights()?;
    let mut s = Matrix::zeros(features.dim, features.dim);
    for (z, w) in states.iter().zip(weights) {
        let p = (features.psi)(z);
        s += &p * p.transpose() * w;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzReport {
    pub lambda_min_sym: f64,
    pub bound: f64,
    pub spectral_abscissa: f64,
    pub hurwitz: bool,
}

/// Checks `λ_min(sym A) ≥ (1−γ)(1−(λγ)^τ)/(1−λγ)·λ_min(Σψ)` and that `−A` is Hurwitz.
pub fn verify_hurwitz_td(a: &Matrix, sigma_psi: &Matrix, gamma: f64, cfg: &TdConfig) -> Result<HurwitzReport, TdError> {
    cfg.validate(gamma)?;
    let (lambda_min_sym, _) = sym_eigen_extremes(a);
    let (sigma_min, _) = sym_eigen_extremes(sigma_psi);
    if !(sigma_min > 0.0) {
        return Err(TdError::InvalidConfig(format!("feature covariance is not positive definite ({sigma_min:.3e})")));
    }
    let lg = cfg.lambda_trace * gamma;
    let bound = (1.0 - gamma) / (1.0 - lg) * (1.0 - lg.powi(cfg.tau as i32)) * sigma_min;
    let abscissa = spectral_abscissa(&(-a));
    let report = HurwitzReport { lambda_min_sym, bound, spectral_abscissa: abscissa, hurwitz: abscissa < 0.0 };
    if lambda_min_sym < bound - HURWITZ_BOUND_SLACK || !report.hurwitz {
        return Err(TdError::BoundViolated(report));
    }
    Ok(report)
}

/// Window-chain certificate `W(x_{0:τ}) = c₀Σ_{i<τ}(i+1)W̃^δ(x_i) + W̃(x_τ)` with rate `c_P`,
/// constant `b_P` and level `R_P`.
pub fn td_drift_certificate(base: &DriftCertificate, tdc: &WindowDrift) -> Result<DriftCertificate, TdError> {
    let tau = tdc.tau;
    if !(tdc.b_p.is_finite() && tdc.r_p.is_finite()) {
        return Err(TdError::InvalidConfig("window drift constants are not finite".into()));
    }
    let base_w = base.w.clone();
    let (c0, delta) = (tdc.c0, base.delta);
    let w: StateFn = Arc::new(move |z| {
        let win = z.window().expect("window state");
        let head: f64 = (0..tau).map(|i| (i + 1) as f64 * base_w(&win[i]).powf(delta)).sum();
        c0 * head + base_w(&win[tau])
    });
    Ok(DriftCertificate::new(w, tdc.c_p, tdc.b_p, delta, tdc.r_p)?)
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>, TdError> {
    let text = std::fs::read_to_string(path).map_err(|e| TdError::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| TdError::Input(format!("{}: {e}", path.display()))))
                .collect()
        })
        .collect()
}

fn to_matrix(rows: Vec<Vec<f64>>, what: &str) -> Result<Matrix, TdError> {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
        return Err(TdError::Input(format!("{what} must be a non-empty rectangular table")));
    }
    Ok(Matrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

/// Reads a finite MRP from a kernel CSV, a reward CSV (one value per state) and a feature CSV (S×d).
pub fn load_finite_mrp(kernel: &Path, reward: &Path, features: &Path, gamma: f64) -> Result<(Mrp, FeatureMap), TdError> {
    let q = to_matrix(read_table(kernel)?, "kernel")?;
    let r: Vec<f64> = read_table(reward)?.into_iter().flatten().collect();
    let phi = to_matrix(read_table(features)?, "features")?;
    if phi.nrows() != q.nrows() {
        return Err(TdError::Input(format!("features have {} rows for {} states", phi.nrows(), q.nrows())));
    }
    Ok((Mrp::finite(&q, r, gamma)?, FeatureMap::from_matrix(&phi)))
}
