//! Markov chain models, stationary laws and drift certificates.

mod drift;
mod stationary;
mod tail;

pub use drift::{
    check_drift, ergodicity_constants, minorization_constants, DriftCertificate, DriftMethod,
    DriftRecord, DriftReport, Ergodicity, Minorization, SmallSetEntry, SmallSets, StateFn,
    SuperlevelInf,
};
pub use stationary::{stationary_exact, stationary_forward_recurrence, RecurrenceStationary, Stationary};
pub use tail::{hurwitz_zeta, riemann_zeta, TailLaw};

use crate::linalg::{spectral_radius, Matrix, Vector};
use crate::rng::StepRng;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Tolerance on row sums and entries of a stochastic matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("kernel is not row stochastic: {0}")]
    NotStochastic(String),
    #[error("gaussian AR chain is unstable: spectral radius {0:.6}")]
    Unstable(f64),
    #[error("invalid return-time law: {0}")]
    InvalidTail(String),
    #[error("window length must be at least 1")]
    InvalidWindow,
    #[error("kernel is reducible")]
    Reducible,
    #[error("kernel is periodic with period {0}")]
    Periodic(u64),
    #[error("drift method {method} is unavailable for {model}")]
    MethodUnavailable { method: &'static str, model: String },
    #[error("minorization constant is zero on the given set")]
    NoMinorization,
    #[error("invalid drift certificate: {0}")]
    InvalidCertificate(String),
    #[error("state {0} does not belong to this chain")]
    ForeignState(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A point of a chain's state space.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainState {
    Finite(usize),
    Integer(u64),
    Real(Vec<f64>),
    /// Trajectory window `(x_0, …, x_τ)`, oldest entry first.
    Window(Vec<ChainState>),
}

impl ChainState {
    pub fn finite_index(&self) -> Option<usize> {
        match self {
            ChainState::Finite(i) => Some(*i),
            _ => None,
        }
    }

    pub fn window(&self) -> Option<&[ChainState]> {
        match self {
            ChainState::Window(v) => Some(v),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ChainState::Finite(i) => i.to_string(),
            ChainState::Integer(k) => k.to_string(),
            ChainState::Real(x) => {
                let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
                format!("({})", parts.join(","))
            }
            ChainState::Window(w) => {
                let parts: Vec<String> = w.iter().map(ChainState::label).collect();
                format!("[{}]", parts.join(" "))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct FiniteKernel {
    pub kernel: Matrix,
    pub cdf: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Recurrence {
    pub law: TailLaw,
    pub k_max: u64,
    /// `P(Y_K = k)` at index `k - 1`, renormalised after truncation.
    pub pmf: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Mass `P(Y ≥ K + 1)` removed by the truncation.
    pub truncation_mass: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct GaussianAr {
    pub rho: Matrix,
    pub noise_cov: Matrix,
    pub chol: Matrix,
}

#[derive(Debug, Clone)]
pub(crate) enum ChainKind {
    Finite(FiniteKernel),
    ForwardRecurrence(Recurrence),
    GaussianAr(GaussianAr),
    Window { base: Box<MarkovModel>, tau: usize },
}

/// A Markov chain that can be simulated step by step.
#[derive(Debug, Clone)]
pub struct MarkovModel {
    pub(crate) kind: ChainKind,
    description: String,
}

fn validate_stochastic(p: &Matrix) -> Result<(), ChainError> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(ChainError::NotStochastic(format!("shape {}x{}", p.nrows(), p.ncols())));
    }
    for (i, row) in p.row_iter().enumerate() {
        if row.iter().any(|x| !x.is_finite() || *x < -STOCHASTIC_TOL) {
            return Err(ChainError::NotStochastic(format!("row {i} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ChainError::NotStochastic(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn sample_cdf(cdf: &[f64], u: f64) -> usize {
    let i = cdf.partition_point(|c| *c <= u);
    i.min(cdf.len() - 1)
}

/// Chain on `{0, …, S-1}` with transition matrix `p`.
pub fn finite_chain(p: &Matrix) -> Result<MarkovModel, ChainError> {
    validate_stochastic(p)?;
    let cdf = p
        .row_iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|x| {
                    acc += x.max(0.0);
                    acc
                })
                .collect()
        })
        .collect();
    Ok(MarkovModel {
        description: format!("finite chain on {} states", p.nrows()),
        kind: ChainKind::Finite(FiniteKernel { kernel: p.clone(), cdf }),
    })
}

/// Forward recurrence chain on `{1, 2, …}`: `z → z - 1` for `z > 1` and a
/// fresh draw of `Y` (truncated at `k_max`) from state 1.
pub fn forward_recurrence_chain(law: TailLaw, k_max: u64) -> Result<MarkovModel, ChainError> {
    law.validate()?;
    if k_max < 1 {
        return Err(ChainError::InvalidTail("truncation level must be at least 1".into()));
    }
    let truncation_mass = law.tail(k_max + 1);
    let kept = 1.0 - truncation_mass;
    let mut pmf: Vec<f64> = (1..=k_max).map(|k| law.pmf(k) / kept).collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|x| *x /= total);
    let mut acc = 0.0;
    let cdf = pmf
        .iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    Ok(MarkovModel {
        description: format!("forward recurrence chain truncated at {k_max}"),
        kind: ChainKind::ForwardRecurrence(Recurrence { law, k_max, pmf, cdf, truncation_mass }),
    })
}

/// Gaussian autoregression `X' = ρX + ξ`, `ξ ~ N(0, noise_cov)`.
pub fn gaussian_ar_chain(rho: &Matrix, noise_cov: &Matrix) -> Result<MarkovModel, ChainError> {
    let d = rho.nrows();
    if rho.ncols() != d || noise_cov.nrows() != d || noise_cov.ncols() != d {
        return Err(ChainError::DimensionMismatch { expected: d, got: noise_cov.nrows() });
    }
    let r = spectral_radius(rho);
    if !(r < 1.0) {
        return Err(ChainError::Unstable(r));
    }
    let chol = noise_cov
        .clone()
        .cholesky()
        .ok_or_else(|| ChainError::InvalidCertificate("noise covariance is not positive definite".into()))?
        .l();
    Ok(MarkovModel {
        description: format!("gaussian AR({d}) chain"),
        kind: ChainKind::GaussianAr(GaussianAr { rho: rho.clone(), noise_cov: noise_cov.clone(), chol }),
    })
}

/// Chain of trajectory windows `(x_{k}, …, x_{k+τ})` of `base`.
pub fn window_chain(base: &MarkovModel, tau: usize) -> Result<MarkovModel, ChainError> {
    if tau < 1 {
        return Err(ChainError::InvalidWindow);
    }
    Ok(MarkovModel {
        description: format!("window of length {} over {}", tau + 1, base.description),
        kind: ChainKind::Window { base: Box::new(base.clone()), tau },
    })
}

impl MarkovModel {
    pub fn description(&self) -> &str {
        &self.description
    }

    /// Advances `state` by one transition using randomness from `rng`.
    pub fn step(&self, state: &mut ChainState, rng: &mut StepRng) {
        match (&self.kind, state) {
            (ChainKind::Finite(f), ChainState::Finite(i)) => {
                let u: f64 = rng.gen();
                *i = sample_cdf(&f.cdf[*i], u);
            }
            (ChainKind::ForwardRecurrence(r), ChainState::Integer(z)) => {
                if *z > 1 {
                    *z -= 1;
                } else {
                    let u: f64 = rng.gen();
                    *z = sample_cdf(&r.cdf, u) as u64 + 1;
                }
            }
            (ChainKind::GaussianAr(g), ChainState::Real(x)) => {
                let xi = Vector::from_iterator(x.len(), (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let next = &g.rho * Vector::from_column_slice(x) + &g.chol * xi;
                x.copy_from_slice(next.as_slice());
            }
            (ChainKind::Window { base, .. }, ChainState::Window(w)) => {
                let mut next = w.last().expect("window is never empty").clone();
                base.step(&mut next, rng);
                w.rotate_left(1);
                *w.last_mut().expect("window is never empty") = next;
            }
            (_, s) => panic!("state {} does not belong to {}", s.label(), self.description),
        }
    }

    /// Whether `state` is a valid point of this chain's state space.
    pub fn contains(&self, state: &ChainState) -> bool {
        match (&self.kind, state) {
            (ChainKind::Finite(f), ChainState::Finite(i)) => *i < f.kernel.nrows(),
            (ChainKind::ForwardRecurrence(r), ChainState::Integer(z)) => *z >= 1 && *z <= r.k_max,
            (ChainKind::GaussianAr(g), ChainState::Real(x)) => x.len() == g.rho.nrows(),
            (ChainKind::Window { base, tau }, ChainState::Window(w)) => {
                w.len() == tau + 1 && w.iter().all(|s| base.contains(s))
            }
            _ => false,
        }
    }

    /// Transition matrix when the state space is finite and small enough to enumerate.
    pub fn exact_kernel(&self) -> Option<Matrix> {
        match &self.kind {
            ChainKind::Finite(f) => Some(f.kernel.clone()),
            ChainKind::ForwardRecurrence(r) => {
                let k = r.k_max as usize;
                let mut p = Matrix::zeros(k, k);
                for (j, w) in r.pmf.iter().enumerate() {
                    p[(0, j)] = *w;
                }
                for z in 1..k {
                    p[(z, z - 1)] = 1.0;
                }
                Some(p)
            }
            ChainKind::Window { base, tau } => {
                let q = base.finite_kernel()?;
                let s = q.nrows();
                let n = s.checked_pow(*tau as u32 + 1)?;
                let mut p = Matrix::zeros(n, n);
                for idx in 0..n {
                    let last = idx % s;
                    let shifted = (idx * s) % n;
                    for y in 0..s {
                        p[(idx, shifted + y)] = q[(last, y)];
                    }
                }
                Some(p)
            }
            ChainKind::GaussianAr(_) => None,
        }
    }

    pub(crate) fn finite_kernel(&self) -> Option<&Matrix> {
        match &self.kind {
            ChainKind::Finite(f) => Some(&f.kernel),
            _ => None,
        }
    }

    /// States in the order used by [`MarkovModel::exact_kernel`].
    ///
    /// Window states are indexed by `Σ_i x_i S^{τ-i}`, so the oldest entry is most significant.
    pub fn enumerate_states(&self) -> Option<Vec<ChainState>> {
        match &self.kind {
            ChainKind::Finite(f) => Some((0..f.kernel.nrows()).map(ChainState::Finite).collect()),
            ChainKind::ForwardRecurrence(r) => Some((1..=r.k_max).map(ChainState::Integer).collect()),
            ChainKind::Window { base, tau } => {
                let s = base.finite_kernel()?.nrows();
                let n = s.checked_pow(*tau as u32 + 1)?;
                Some((0..n).map(|idx| window_state(idx, s, *tau)).collect())
            }
            ChainKind::GaussianAr(_) => None,
        }
    }

    /// Stationary law over [`MarkovModel::enumerate_states`], when it is computable exactly.
    pub fn stationary_weights(&self) -> Result<(Vec<ChainState>, Vec<f64>), ChainError> {
        match &self.kind {
            ChainKind::Finite(f) => {
                let st = stationary_exact(&f.kernel)?;
                Ok((self.enumerate_states().expect("finite"), st.weights))
            }
            ChainKind::ForwardRecurrence(r) => {
                let st = stationary_forward_recurrence(&r.law, r.k_max)?;
                Ok((self.enumerate_states().expect("finite"), st.weights))
            }
            ChainKind::Window { base, tau } => {
                let q = base.finite_kernel().ok_or(ChainError::MethodUnavailable {
                    method: "exact stationary law",
                    model: self.description.clone(),
                })?;
                let pi0 = stationary_exact(q)?.weights;
                let states = self.enumerate_states().expect("finite base");
                let weights = states
                    .iter()
                    .map(|st| {
                        let w = st.window().expect("window");
                        let idx: Vec<usize> = w.iter().map(|x| x.finite_index().expect("finite")).collect();
                        let mut p = pi0[idx[0]];
                        for l in 1..=*tau {
                            p *= q[(idx[l - 1], idx[l])];
                        }
                        p
                    })
                    .collect();
                Ok((states, weights))
            }
            ChainKind::GaussianAr(_) => Err(ChainError::MethodUnavailable {
                method: "exact stationary law",
                model: self.description.clone(),
            }),
        }
    }

    /// Window length minus one, or `None` for non-window chains.
    pub fn window_tau(&self) -> Option<usize> {
        match &self.kind {
            ChainKind::Window { tau, .. } => Some(*tau),
            _ => None,
        }
    }

    pub fn window_base(&self) -> Option<&MarkovModel> {
        match &self.kind {
            ChainKind::Window { base, .. } => Some(base),
            _ => None,
        }
    }

    /// Truncation mass of a forward recurrence chain.
    pub fn truncation_mass(&self) -> Option<f64> {
        match &self.kind {
            ChainKind::ForwardRecurrence(r) => Some(r.truncation_mass),
            _ => None,
        }
    }

    /// Coefficients `(ρ, Σ)` of a Gaussian AR chain.
    pub fn gaussian_ar_parts(&self) -> Option<(&Matrix, &Matrix)> {
        match &self.kind {
            ChainKind::GaussianAr(g) => Some((&g.rho, &g.noise_cov)),
            _ => None,
        }
    }
}

/// Window state with index `idx` over a base of `s` states.
pub fn window_state(idx: usize, s: usize, tau: usize) -> ChainState {
    let mut digits = vec![ChainState::Finite(0); tau + 1];
    let mut rem = idx;
    for slot in digits.iter_mut().rev() {
        *slot = ChainState::Finite(rem % s);
        rem /= s;
    }
    ChainState::Window(digits)
}

/// Stationary covariance of `X' = ρX + ξ`, solving `Σ = ρΣρᵀ + N`.
pub fn ar_stationary_covariance(rho: &Matrix, noise_cov: &Matrix) -> Option<Matrix> {
    let d = rho.nrows();
    let eye = Matrix::identity(d * d, d * d);
    let k = eye - rho.kronecker(rho);
    let rhs = Vector::from_column_slice(noise_cov.as_slice());
    let x = k.lu().solve(&rhs)?;
    let s = Matrix::from_column_slice(d, d, x.as_slice());
    Some((&s + s.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn rejects_non_stochastic() {
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.6, 0.5, 0.5]);
        assert!(matches!(finite_chain(&p), Err(ChainError::NotStochastic(_))));
    }

    #[test]
    fn unstable_ar_rejected() {
        let r = Matrix::from_element(1, 1, 1.0);
        let n = Matrix::identity(1, 1);
        assert!(matches!(gaussian_ar_chain(&r, &n), Err(ChainError::Unstable(_))));
    }

    #[test]
    fn window_enumeration_matches_kernel_shift() {
        let q = Matrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let w = window_chain(&finite_chain(&q).unwrap(), 2).unwrap();
        let p = w.exact_kernel().unwrap();
        let states = w.enumerate_states().unwrap();
        assert_eq!(states.len(), 8);
        for (i, s) in states.iter().enumerate() {
            let x = s.window().unwrap();
            let row_sum: f64 = p.row(i).iter().sum();
            assert!((row_sum - 1.0).abs() < 1e-15);
            for (j, t) in states.iter().enumerate() {
                let y = t.window().unwrap();
                let shift_ok = x[1..] == y[..2];
                let expected = if shift_ok {
                    q[(x[2].finite_index().unwrap(), y[2].finite_index().unwrap())]
                } else {
                    0.0
                };
                assert_eq!(p[(i, j)], expected);
            }
        }
    }

    #[test]
    fn window_step_shifts() {
        let q = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let w = window_chain(&finite_chain(&q).unwrap(), 1).unwrap();
        let mut s = ChainState::Window(vec![ChainState::Finite(0), ChainState::Finite(1)]);
        w.step(&mut s, &mut StreamKey::new(1, 0).at_step(1));
        assert_eq!(s, ChainState::Window(vec![ChainState::Finite(1), ChainState::Finite(0)]));
    }

    #[test]
    fn recurrence_counts_down() {
        let m = forward_recurrence_chain(TailLaw::Zeta { s: 3.0 }, 100).unwrap();
        let mut z = ChainState::Integer(5);
        m.step(&mut z, &mut StreamKey::new(1, 0).at_step(1));
        assert_eq!(z, ChainState::Integer(4));
    }

    #[test]
    fn truncation_mass_zeta_cubic() {
        let m = forward_recurrence_chain(TailLaw::Zeta { s: 3.0 }, 10_000).unwrap();
        assert!(m.truncation_mass().unwrap() <= 5e-9);
    }

    #[test]
    fn ar_covariance_scalar() {
        let s = ar_stationary_covariance(&Matrix::from_element(1, 1, 0.5), &Matrix::identity(1, 1)).unwrap();
        assert!((s[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }
}
