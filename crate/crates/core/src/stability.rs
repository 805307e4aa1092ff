//! Monte Carlo moments of random matrix products and of the LSA error terms,
//! the theoretical envelope, decay fits and the exact counterexample recursion.

use crate::chains::{stationary_forward_recurrence, ChainError, ChainState, MarkovModel, TailLaw};
use crate::constants::ConstantsReport;
use crate::linalg::{operator_norm, Matrix, Vector};
use crate::lsa::{ChainPath, DecompositionState, LsaModel, MatrixFn};
use crate::rng::StreamKey;
use crate::schedules::StepSchedule;
use crate::stats::{batch_mean_se, least_squares, BATCHES, Z99};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

/// Products whose norm crosses this threshold are reported rather than averaged.
pub const OVERFLOW_LIMIT: f64 = 1e300;
const RENORMALISE_AT: f64 = 1e100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("running product norm exceeded 1e300 at step {step} (replica {replica})")]
    Overflow { step: u64, replica: u64 },
    #[error("at least {min} replicas are required, got {got}")]
    TooFewReplicas { min: u64, got: u64 },
    #[error("moment order must be at least 1, got {0}")]
    InvalidOrder(f64),
    #[error("grid must be non-empty and strictly increasing")]
    InvalidGrid,
    #[error("first step {alpha1:.3e} is not below the admissible cap {cap:.3e}")]
    StepAboveCap { alpha1: f64, cap: f64 },
    #[error("report has no entry `{0}`")]
    MissingConstant(String),
    #[error("fit window holds {0} usable points, at least 4 are needed")]
    DegenerateWindow(usize),
    #[error("epsilon {epsilon} must lie in [0, pi(1) = {pi1})")]
    EpsilonTooLarge { epsilon: f64, pi1: f64 },
    #[error("parameter out of range: {0}")]
    Range(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPoint {
    pub n: u64,
    pub sum_alpha: f64,
    /// `E^{1/p}[X^p]`.
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Sample mean of `X^p` and its batch-means standard error.
    pub moment: f64,
    pub moment_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub p: f64,
    pub points: Vec<MomentPoint>,
    pub replicas: u64,
    pub seed: u64,
}

impl MomentSeries {
    /// Builds the series from per-replica values `values[r][i]` at `grid[i]`.
    pub fn from_samples(p: f64, grid: &[u64], schedule: &StepSchedule, values: &[Vec<f64>], seed: u64) -> Self {
        let points = grid
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let powered: Vec<f64> = values.iter().map(|v| v[i].powf(p)).collect();
                let (moment, moment_se) = batch_mean_se(&powered, BATCHES);
                let estimate = moment.powf(1.0 / p);
                let half = if moment > 0.0 { Z99 * moment_se * estimate / (p * moment) } else { 0.0 };
                MomentPoint {
                    n,
                    sum_alpha: schedule.sum_alpha(n),
                    estimate,
                    ci_low: (estimate - half).max(0.0),
                    ci_high: estimate + half,
                    moment,
                    moment_se,
                }
            })
            .collect();
        Self { p, points, replicas: values.len() as u64, seed }
    }
}

fn check_grid(grid: &[u64]) -> Result<(), StabilityError> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StabilityError::InvalidGrid);
    }
    Ok(())
}

fn check_common(p: f64, replicas: u64, grid: &[u64]) -> Result<(), StabilityError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(StabilityError::InvalidOrder(p));
    }
    if replicas < 100 {
        return Err(StabilityError::TooFewReplicas { min: 100, got: replicas });
    }
    check_grid(grid)
}

/// Norms `‖Γ_{1:n}‖` at the grid points along one path; the product is kept
/// as `exp(log_scale)·M` and rescaled whenever `M` grows large.
pub fn gamma_norms_on_path(
    chain: &MarkovModel,
    abar: &MatrixFn,
    schedule: &StepSchedule,
    z0: &ChainState,
    grid: &[u64],
    key: StreamKey,
) -> Result<Vec<f64>, StabilityError> {
    let d = abar(z0).nrows();
    let eye = Matrix::identity(d, d);
    let mut m = eye.clone();
    let mut log_scale = 0.0f64;
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0usize;
    let mut walk = ChainPath::new(chain, z0.clone(), key);
    let last = *grid.last().expect("non-empty grid");
    if grid[0] == 0 {
        out.push(1.0);
        next = 1;
    }
    for _ in 0..last {
        let (k, z) = walk.advance();
        let alpha = schedule.alpha(k);
        m = (&eye - abar(z) * alpha) * &m;
        let size = m.amax();
        if size > RENORMALISE_AT {
            m /= size;
            log_scale += size.ln();
        }
        if next < grid.len() && grid[next] == k {
            let ln_norm = log_scale + operator_norm(&m).ln();
            if ln_norm > OVERFLOW_LIMIT.ln() {
                return Err(StabilityError::Overflow { step: k, replica: key.replica() });
            }
            out.push(ln_norm.exp());
            next += 1;
        }
    }
    Ok(out)
}

/// Monte Carlo `E_{z0}^{1/p}[‖Γ_{1:n}‖^p]` on a grid, one independent stream per replica.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gamma_moment(
    chain: &MarkovModel,
    abar: &MatrixFn,
    schedule: &StepSchedule,
    z0: &ChainState,
    p: f64,
    grid: &[u64],
    replicas: u64,
    seed: u64,
) -> Result<MomentSeries, StabilityError> {
    check_common(p, replicas, grid)?;
    let values: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| gamma_norms_on_path(chain, abar, schedule, z0, grid, StreamKey::new(seed, r)))
        .collect::<Result<_, _>>()?;
    Ok(MomentSeries::from_samples(p, grid, schedule, &values, seed))
}

/// `E_{z0}[‖Γ_{1:n}‖^p]` by summing over every path of a finite chain.
pub fn exact_gamma_moment(
    kernel: &Matrix,
    abar: &MatrixFn,
    schedule: &StepSchedule,
    z0: usize,
    p: f64,
    n: u64,
) -> f64 {
    let s = kernel.nrows();
    let mats: Vec<Matrix> = (0..s).map(|i| abar(&ChainState::Finite(i))).collect();
    let d = mats[0].nrows();
    #[allow(clippy::too_many_arguments)]
    fn walk(
        kernel: &Matrix,
        mats: &[Matrix],
        schedule: &StepSchedule,
        z: usize,
        k: u64,
        n: u64,
        prob: f64,
        prod: &Matrix,
        p: f64,
    ) -> f64 {
        if k == n {
            return prob * operator_norm(prod).powf(p);
        }
        let alpha = schedule.alpha(k + 1);
        let d = prod.nrows();
        (0..kernel.ncols())
            .filter(|&y| kernel[(z, y)] > 0.0)
            .map(|y| {
                let next = (Matrix::identity(d, d) - &mats[y] * alpha) * prod;
                walk(kernel, mats, schedule, y, k + 1, n, prob * kernel[(z, y)], &next, p)
            })
            .sum()
    }
    walk(kernel, &mats, schedule, z0, 0, n, 1.0, &Matrix::identity(d, d), p)
}

/// Initial condition of the LSA runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta0 {
    Fixed(Vector),
    /// `mean + std·N(0, I)`, drawn from the step-0 window of each replica.
    Gaussian { mean: Vector, std: f64 },
}

impl Theta0 {
    fn draw(&self, key: &StreamKey) -> Vector {
        match self {
            Theta0::Fixed(v) => v.clone(),
            Theta0::Gaussian { mean, std } => {
                let mut rng = key.at_step(0);
                mean + Vector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(&mut rng)))
                    * *std
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsaMoments {
    pub theta_tilde: MomentSeries,
    pub theta_tr: MomentSeries,
    pub j0: MomentSeries,
    pub h0: MomentSeries,
    pub j1: MomentSeries,
    pub h1: MomentSeries,
    /// Largest relative gaps of the two decomposition identities seen on any path.
    pub identity_gaps: (f64, f64),
}

impl LsaMoments {
    pub fn components(&self) -> [(&'static str, &MomentSeries); 6] {
        [
            ("thetaTilde", &self.theta_tilde),
            ("thetaTr", &self.theta_tr),
            ("J0", &self.j0),
            ("H0", &self.h0),
            ("J1", &self.j1),
            ("H1", &self.h1),
        ]
    }
}

type PathRecord = (Vec<[f64; 6]>, (f64, f64));

fn lsa_path(
    model: &LsaModel,
    schedule: &StepSchedule,
    theta0: &Theta0,
    z0: &ChainState,
    grid: &[u64],
    key: StreamKey,
) -> Result<PathRecord, StabilityError> {
    let noise = model.noise_vector();
    let mut st = DecompositionState::new(theta0.draw(&key) - &model.theta_star);
    let mut out = Vec::with_capacity(grid.len());
    let mut gaps = (0.0f64, 0.0f64);
    let norms = |st: &DecompositionState| {
        [st.theta_tilde.norm(), st.theta_tr.norm(), st.j0.norm(), st.h0.norm(), st.j1.norm(), st.h1.norm()]
    };
    let mut next = 0usize;
    if grid[0] == 0 {
        out.push(norms(&st));
        next = 1;
    }
    let mut walk = ChainPath::new(&model.chain, z0.clone(), key);
    let last = *grid.last().expect("non-empty grid");
    for _ in 0..last {
        let (k, z) = walk.advance();
        st.advance(model, &noise, schedule.alpha(k), z);
        if next < grid.len() && grid[next] == k {
            let v = norms(&st);
            if v.iter().any(|x| !(x.is_finite() && *x <= OVERFLOW_LIMIT)) {
                return Err(StabilityError::Overflow { step: k, replica: key.replica() });
            }
            let g = st.identity_gaps();
            gaps = (gaps.0.max(g.0), gaps.1.max(g.1));
            out.push(v);
            next += 1;
        }
    }
    Ok((out, gaps))
}

/// Moments of every error component on shared chain paths.
#[allow(clippy::too_many_arguments)]
pub fn estimate_lsa_moment(
    model: &LsaModel,
    schedule: &StepSchedule,
    theta0: &Theta0,
    z0: &ChainState,
    p: f64,
    grid: &[u64],
    replicas: u64,
    seed: u64,
) -> Result<LsaMoments, StabilityError> {
    check_common(p, replicas, grid)?;
    let paths: Vec<PathRecord> = (0..replicas)
        .into_par_iter()
        .map(|r| lsa_path(model, schedule, theta0, z0, grid, StreamKey::new(seed, r)))
        .collect::<Result<_, _>>()?;
    let series = |c: usize| {
        let values: Vec<Vec<f64>> = paths.iter().map(|(v, _)| v.iter().map(|row| row[c]).collect()).collect();
        MomentSeries::from_samples(p, grid, schedule, &values, seed)
    };
    let identity_gaps = paths.iter().fold((0.0f64, 0.0f64), |acc, (_, g)| (acc.0.max(g.0), acc.1.max(g.1)));
    Ok(LsaMoments {
        theta_tilde: series(0),
        theta_tr: series(1),
        j0: series(2),
        h0: series(3),
        j1: series(4),
        h1: series(5),
        identity_gaps,
    })
}

/// `C_{st,p}·exp(−(a/4)Σ_{ℓ≤n}α_ℓ)·V(z0)^{1/(2p)}` without checking the step-size cap.
pub fn envelope_curve(c_st: f64, a: f64, schedule: &StepSchedule, v_z0: f64, p: f64, grid: &[u64]) -> Vec<f64> {
    grid.iter()
        .map(|&n| c_st * (-(a / 4.0) * schedule.sum_alpha(n)).exp() * v_z0.powf(1.0 / (2.0 * p)))
        .collect()
}

/// Stability bound at each grid point, using `a` and the order-`p` constants of `report`.
pub fn theory_envelope(
    report: &ConstantsReport,
    schedule: &StepSchedule,
    v_z0: f64,
    p: f64,
    grid: &[u64],
) -> Result<Vec<f64>, StabilityError> {
    let value = |k: String| report.get(&k).ok_or(StabilityError::MissingConstant(k));
    let a = report.inputs.get("a").copied().ok_or_else(|| StabilityError::MissingConstant("a".into()))?;
    let c_st = value(format!("C_st_p{p}"))?;
    let log_cap = value(format!("log_alpha_inf_p{p}"))?;
    let alpha1 = schedule.alpha(1);
    if alpha1 > 0.0 && !(alpha1.ln() < log_cap) {
        return Err(StabilityError::StepAboveCap { alpha1, cap: log_cap.exp() });
    }
    Ok(envelope_curve(c_st, a, schedule, v_z0, p, grid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Abscissa {
    SumAlpha,
    LogN,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    pub used: usize,
    /// Steps dropped because their estimate was not finite and positive.
    pub excluded: Vec<u64>,
}

/// Least squares of `log(estimate)` against the chosen abscissa over `window.0 ≤ n ≤ window.1`.
pub fn fit_decay(series: &MomentSeries, abscissa: Abscissa, window: (u64, u64)) -> Result<DecayFit, StabilityError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for pt in series.points.iter().filter(|pt| pt.n >= window.0 && pt.n <= window.1) {
        let x = match abscissa {
            Abscissa::SumAlpha => pt.sum_alpha,
            Abscissa::LogN => (pt.n as f64).ln(),
        };
        if pt.estimate.is_finite() && pt.estimate > 0.0 && x.is_finite() {
            xs.push(x);
            ys.push(pt.estimate.ln());
        } else {
            excluded.push(pt.n);
        }
    }
    if xs.len() < 4 {
        return Err(StabilityError::DegenerateWindow(xs.len()));
    }
    let fit = least_squares(&xs, &ys);
    Ok(DecayFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared.clamp(0.0, 1.0),
        window,
        used: xs.len(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    /// `u_0, …, u_{n_max}`.
    pub u: Vec<f64>,
    /// `θ₀(1+αε)ⁿ P(Y > n+1)` for the untruncated law.
    pub lower_bound: Vec<f64>,
    /// `θ₀(1+αε)ⁿ P(Y > K)`, the truncation allowance on the lower bound.
    pub slack: Vec<f64>,
    pub pi1: f64,
    pub truncation_mass: f64,
}

impl Counterexample {
    /// Whether `u_n ≥ lowerBound_n − slack_n` at every `n`.
    pub fn bound_holds(&self) -> bool {
        self.u.iter().zip(&self.lower_bound).zip(&self.slack).all(|((u, l), s)| *u >= l - s)
    }
}

/// `u_n = θ₀ E_1[∏_{k<n}(1 − αA_ε(Z_{k+1}))]` on the forward recurrence chain truncated at `k_max`,
/// with `A_ε(1) = 1` and `A_ε(z) = −ε` otherwise, computed by dynamic programming.
pub fn counterexample_exact(
    tail: &TailLaw,
    k_max: u64,
    epsilon: f64,
    alpha: f64,
    theta0: f64,
    n_max: usize,
) -> Result<Counterexample, StabilityError> {
    tail.validate()?;
    if k_max < 2 {
        return Err(StabilityError::Range("truncation level must be at least 2".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(StabilityError::Range(format!("alpha must lie in [0,1), got {alpha}")));
    }
    let pi1 = stationary_forward_recurrence(tail, k_max)?.weights[0];
    if !(epsilon >= 0.0 && epsilon < pi1) {
        return Err(StabilityError::EpsilonTooLarge { epsilon, pi1 });
    }
    let k = k_max as usize;
    let raw: Vec<f64> = (1..=k_max).map(|j| tail.pmf(j)).collect();
    let total: f64 = raw.iter().sum();
    let pmf: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // factor picked up on entering a state; index i is state i+1
    let factor = |i: usize| if i == 0 { 1.0 - alpha } else { 1.0 + alpha * epsilon };
    let weighted: Vec<f64> = (0..k).map(|i| pmf[i] * factor(i)).collect();

    let mut v = vec![1.0; k];
    let mut next = vec![0.0; k];
    let mut u = Vec::with_capacity(n_max + 1);
    u.push(theta0);
    for _ in 0..n_max {
        next[0] = weighted.iter().zip(&v).map(|(w, x)| w * x).sum();
        for i in 1..k {
            next[i] = factor(i - 1) * v[i - 1];
        }
        std::mem::swap(&mut v, &mut next);
        u.push(theta0 * v[0]);
    }
    let truncation_mass = tail.tail(k_max + 1);
    let growth = 1.0 + alpha * epsilon;
    let lower_bound = (0..=n_max).map(|n| theta0 * growth.powi(n as i32) * tail.tail(n as u64 + 2)).collect();
    let slack = (0..=n_max).map(|n| theta0 * growth.powi(n as i32) * truncation_mass).collect();
    Ok(Counterexample { u, lower_bound, slack, pi1, truncation_mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::finite_chain;
    use std::sync::Arc;

    fn scalar(values: [f64; 2]) -> MatrixFn {
        Arc::new(move |z: &ChainState| Matrix::from_element(1, 1, values[z.finite_index().unwrap()]))
    }

    #[test]
    fn deterministic_product_has_no_spread() {
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let chain = finite_chain(&p).unwrap();
        let s = StepSchedule::Constant { alpha: 0.1 };
        let series = estimate_gamma_moment(&chain, &scalar([1.0, 1.0]), &s, &ChainState::Finite(0), 2.0, &[1, 5, 10], 100, 3)
            .unwrap();
        for pt in &series.points {
            assert!((pt.estimate - 0.9f64.powi(pt.n as i32)).abs() < 1e-14);
            assert_eq!(pt.ci_low, pt.ci_high);
        }
    }

    #[test]
    fn exact_enumeration_two_steps() {
        let p = Matrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let s = StepSchedule::Constant { alpha: 0.1 };
        let m = exact_gamma_moment(&p, &scalar([2.0, -1.0]), &s, 0, 1.0, 2);
        let f = [0.8, 1.1];
        let expect: f64 = (0..2)
            .flat_map(|a| (0..2).map(move |b| (a, b)))
            .map(|(a, b)| p[(0, a)] * p[(a, b)] * f[a] * f[b])
            .sum();
        assert!((m - expect).abs() < 1e-14);
    }

    #[test]
    fn geometric_fit() {
        let s = StepSchedule::Constant { alpha: 0.01 };
        let grid: Vec<u64> = (1..=10).map(|i| i * 100).collect();
        let points = grid
            .iter()
            .map(|&n| {
                let sa = s.sum_alpha(n);
                let e = (-0.5 * sa).exp();
                MomentPoint { n, sum_alpha: sa, estimate: e, ci_low: e, ci_high: e, moment: e, moment_se: 0.0 }
            })
            .collect();
        let series = MomentSeries { p: 1.0, points, replicas: 1, seed: 0 };
        let fit = fit_decay(&series, Abscissa::SumAlpha, (0, u64::MAX)).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9 && (fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn counterexample_trivial_cases() {
        let law = TailLaw::Zeta { s: 3.0 };
        let c = counterexample_exact(&law, 200, 0.3, 0.0, 2.0, 30).unwrap();
        assert!(c.u.iter().all(|u| (u - 2.0).abs() < 1e-12));
        let c = counterexample_exact(&law, 200, 0.0, 0.4, 1.0, 30).unwrap();
        assert!(c.u.windows(2).all(|w| w[1] <= w[0] + 1e-15) && c.u.iter().all(|u| *u <= 1.0));
        assert!(matches!(
            counterexample_exact(&law, 200, 0.9, 0.4, 1.0, 30),
            Err(StabilityError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn zero_schedule_envelope_is_flat() {
        let s = StepSchedule::Constant { alpha: 0.0 };
        let env = envelope_curve(3.0, 0.2, &s, 16.0, 2.0, &[1, 10, 100]);
        assert!(env.iter().all(|e| (e - 3.0 * 2.0).abs() < 1e-14));
    }
}
