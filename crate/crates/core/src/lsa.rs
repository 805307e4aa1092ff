//! Linear stochastic approximation driven by a Markov chain, with the exact
//! split of the error into transient, leading fluctuation and higher-order parts.

use crate::chains::{ChainError, ChainState, MarkovModel};
use crate::linalg::{spectral_abscissa, LinalgError, Matrix, Vector, HURWITZ_MARGIN};
use crate::rng::{StreamKey, DOMAIN_EXPECTATION};
use crate::schedules::StepSchedule;
use crate::stats::{batch_mean_se, BATCHES, Z99};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub type MatrixFn = Arc<dyn Fn(&ChainState) -> Matrix + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&ChainState) -> Vector + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsaError {
    #[error("-A is not Hurwitz (spectral abscissa of -A is {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },
    #[error("averaged matrix A is singular")]
    SingularA,
    #[error("ergodic average did not converge: relative 99% half-width {rel_half_width:.3e} exceeds {tolerance:.1e}")]
    AveragingNotConverged { rel_half_width: f64, tolerance: f64 },
    #[error("Abar returned a {rows}x{cols} matrix, expected {d}x{d}")]
    DimensionMismatch { rows: usize, cols: usize, d: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Averaging {
    /// Sum against the exact stationary law of an enumerable chain.
    Exact,
    /// Ergodic average along one path started at `start` after `burn_in` steps.
    MonteCarlo { samples: u64, burn_in: u64, seed: u64, start: ChainState, rel_tol: f64 },
}

impl Averaging {
    pub fn monte_carlo(start: ChainState, seed: u64) -> Self {
        Averaging::MonteCarlo { samples: 1_000_000, burn_in: 10_000, seed, start, rel_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AveragingMeta {
    Exact { residual: f64 },
    MonteCarlo { samples: u64, burn_in: u64, rel_half_width: f64, a_half_width: Matrix, b_half_width: Vector },
}

#[derive(Clone)]
pub struct LsaModel {
    pub chain: MarkovModel,
    pub abar: MatrixFn,
    pub bbar: VectorFn,
    pub a_avg: Matrix,
    pub b_avg: Vector,
    pub theta_star: Vector,
    pub meta: AveragingMeta,
}

impl fmt::Debug for LsaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LsaModel")
            .field("chain", &self.chain.description())
            .field("a_avg", &self.a_avg)
            .field("b_avg", &self.b_avg)
            .field("theta_star", &self.theta_star)
            .field("meta", &self.meta)
            .finish()
    }
}

/// `ε̄(z) = b̄(z) − b − (Ā(z) − A)θ*`.
#[derive(Clone)]
pub struct NoiseVector {
    abar: MatrixFn,
    bbar: VectorFn,
    a_avg: Matrix,
    b_avg: Vector,
    theta_star: Vector,
}

impl NoiseVector {
    pub fn eval(&self, z: &ChainState) -> Vector {
        let a = (self.abar)(z);
        self.eval_with(z, &a)
    }

    fn eval_with(&self, z: &ChainState, abar_z: &Matrix) -> Vector {
        (self.bbar)(z) - &self.b_avg - (abar_z - &self.a_avg) * &self.theta_star
    }
}

fn averages_exact(chain: &MarkovModel, abar: &MatrixFn, bbar: &VectorFn) -> Result<(Matrix, Vector), LsaError> {
    let (states, weights) = chain.stationary_weights()?;
    let mut a: Option<Matrix> = None;
    let mut b: Option<Vector> = None;
    for (z, w) in states.iter().zip(&weights) {
        if *w == 0.0 {
            continue;
        }
        let az = abar(z) * *w;
        let bz = bbar(z) * *w;
        match (&mut a, &mut b) {
            (Some(a), Some(b)) => {
                *a += az;
                *b += bz;
            }
            _ => {
                a = Some(az);
                b = Some(bz);
            }
        }
    }
    Ok((a.expect("stationary law has mass"), b.expect("stationary law has mass")))
}

struct McAverage {
    a: Matrix,
    b: Vector,
    a_half: Matrix,
    b_half: Vector,
}

fn averages_mc(
    chain: &MarkovModel,
    abar: &MatrixFn,
    bbar: &VectorFn,
    samples: u64,
    burn_in: u64,
    seed: u64,
    start: &ChainState,
) -> McAverage {
    let mut rng = StreamKey::with_domain(seed, DOMAIN_EXPECTATION, 0).at_step(0);
    let mut z = start.clone();
    for _ in 0..burn_in {
        chain.step(&mut z, &mut rng);
    }
    let a0 = abar(&z);
    let (d, m) = (a0.nrows(), a0.ncols());
    let batches = BATCHES.min(samples.max(1) as usize);
    let width = d * m + d;
    let mut batch_sums = vec![vec![0.0; width]; batches];
    let mut counts = vec![0u64; batches];
    for i in 0..samples {
        chain.step(&mut z, &mut rng);
        let slot = (i as u128 * batches as u128 / samples as u128) as usize;
        let az = abar(&z);
        let bz = bbar(&z);
        let row = &mut batch_sums[slot];
        for (k, v) in az.iter().chain(bz.iter()).enumerate() {
            row[k] += v;
        }
        counts[slot] += 1;
    }
    let mut mean = vec![0.0; width];
    let mut half = vec![0.0; width];
    for k in 0..width {
        let means: Vec<f64> = (0..batches).map(|s| batch_sums[s][k] / counts[s].max(1) as f64).collect();
        let total: f64 = (0..batches).map(|s| batch_sums[s][k]).sum();
        let (_, se) = batch_mean_se(&means, batches);
        mean[k] = total / samples as f64;
        half[k] = Z99 * se;
    }
    McAverage {
        a: Matrix::from_column_slice(d, m, &mean[..d * m]),
        b: Vector::from_column_slice(&mean[d * m..]),
        a_half: Matrix::from_column_slice(d, m, &half[..d * m]),
        b_half: Vector::from_column_slice(&half[d * m..]),
    }
}

/// Averages `Ā` and `b̄` under the stationary law, solves for `θ*` and checks that `−A` is Hurwitz.
pub fn build_model(
    chain: MarkovModel,
    abar: MatrixFn,
    bbar: VectorFn,
    averaging: &Averaging,
) -> Result<LsaModel, LsaError> {
    let (a_avg, b_avg, meta) = match averaging {
        Averaging::Exact => {
            let (a, b) = averages_exact(&chain, &abar, &bbar)?;
            (a, b, None)
        }
        Averaging::MonteCarlo { samples, burn_in, seed, start, rel_tol } => {
            let mc = averages_mc(&chain, &abar, &bbar, *samples, *burn_in, *seed, start);
            let rel_a = mc.a_half.amax() / mc.a.amax().max(f64::MIN_POSITIVE);
            let rel_b = if mc.b.amax() > 0.0 { mc.b_half.amax() / mc.b.amax() } else { mc.b_half.amax() };
            let rel = rel_a.max(rel_b);
            if !(rel <= *rel_tol) {
                return Err(LsaError::AveragingNotConverged { rel_half_width: rel, tolerance: *rel_tol });
            }
            let meta = AveragingMeta::MonteCarlo {
                samples: *samples,
                burn_in: *burn_in,
                rel_half_width: rel,
                a_half_width: mc.a_half,
                b_half_width: mc.b_half,
            };
            (mc.a, mc.b, Some(meta))
        }
    };
    let d = b_avg.len();
    if a_avg.nrows() != d || a_avg.ncols() != d {
        return Err(LsaError::DimensionMismatch { rows: a_avg.nrows(), cols: a_avg.ncols(), d });
    }
    let abscissa = spectral_abscissa(&(-&a_avg));
    if abscissa >= -HURWITZ_MARGIN {
        return Err(LsaError::NotHurwitz { abscissa });
    }
    let lu = a_avg.clone().lu();
    let mut theta_star = lu.solve(&b_avg).ok_or(LsaError::SingularA)?;
    let r = &b_avg - &a_avg * &theta_star;
    if let Some(dx) = lu.solve(&r) {
        theta_star += dx;
    }
    let residual = (&a_avg * &theta_star - &b_avg).amax();
    let meta = meta.unwrap_or(AveragingMeta::Exact { residual });
    Ok(LsaModel { chain, abar, bbar, a_avg, b_avg, theta_star, meta })
}

impl LsaModel {
    pub fn dim(&self) -> usize {
        self.b_avg.len()
    }

    pub fn noise_vector(&self) -> NoiseVector {
        NoiseVector {
            abar: self.abar.clone(),
            bbar: self.bbar.clone(),
            a_avg: self.a_avg.clone(),
            b_avg: self.b_avg.clone(),
            theta_star: self.theta_star.clone(),
        }
    }

    pub fn noise(&self, z: &ChainState) -> Vector {
        self.noise_vector().eval(z)
    }
}

pub fn noise_vector(model: &LsaModel) -> NoiseVector {
    model.noise_vector()
}

/// Chain path `Z_1, Z_2, …` from `z0`; step `k` draws from the window of step `k` of `key`.
pub struct ChainPath<'a> {
    chain: &'a MarkovModel,
    key: StreamKey,
    state: ChainState,
    step: u64,
}

impl<'a> ChainPath<'a> {
    pub fn new(chain: &'a MarkovModel, z0: ChainState, key: StreamKey) -> Self {
        Self { chain, key, state: z0, step: 0 }
    }

    /// Advances to `Z_{k+1}` and returns `(k+1, &Z_{k+1})`.
    pub fn advance(&mut self) -> (u64, &ChainState) {
        self.step += 1;
        let mut rng = self.key.at_step(self.step);
        self.chain.step(&mut self.state, &mut rng);
        (self.step, &self.state)
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }
}

#[derive(Debug, Clone)]
pub struct LsaRun {
    /// `θ_0, …, θ_n`.
    pub thetas: Vec<Vector>,
    /// `Z_0, …, Z_n`.
    pub path: Vec<ChainState>,
}

pub fn run_lsa_with_key(
    model: &LsaModel,
    schedule: &StepSchedule,
    theta0: &Vector,
    z0: &ChainState,
    n: u64,
    key: StreamKey,
) -> LsaRun {
    let mut thetas = Vec::with_capacity(n as usize + 1);
    let mut path = Vec::with_capacity(n as usize + 1);
    let mut theta = theta0.clone();
    thetas.push(theta.clone());
    path.push(z0.clone());
    let mut walk = ChainPath::new(&model.chain, z0.clone(), key);
    for _ in 0..n {
        let (k, z) = walk.advance();
        let alpha = schedule.alpha(k);
        let a = (model.abar)(z);
        let b = (model.bbar)(z);
        theta += (b - a * &theta) * alpha;
        thetas.push(theta.clone());
        path.push(z.clone());
    }
    LsaRun { thetas, path }
}

/// `θ_{k+1} = θ_k + α_{k+1}(−Ā(Z_{k+1})θ_k + b̄(Z_{k+1}))` for `n` steps.
pub fn run_lsa(model: &LsaModel, schedule: &StepSchedule, theta0: &Vector, z0: &ChainState, n: u64, seed: u64) -> LsaRun {
    run_lsa_with_key(model, schedule, theta0, z0, n, StreamKey::new(seed, 0))
}

/// Error terms carried along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionState {
    pub theta_tilde: Vector,
    pub theta_tr: Vector,
    pub j0: Vector,
    pub h0: Vector,
    pub j1: Vector,
    pub h1: Vector,
}

impl DecompositionState {
    pub fn new(theta_tilde0: Vector) -> Self {
        let zero = Vector::zeros(theta_tilde0.len());
        Self {
            theta_tr: theta_tilde0.clone(),
            theta_tilde: theta_tilde0,
            j0: zero.clone(),
            h0: zero.clone(),
            j1: zero.clone(),
            h1: zero,
        }
    }

    /// One step with step size `alpha` at the state `z = Z_{k+1}`.
    pub fn advance(&mut self, model: &LsaModel, noise: &NoiseVector, alpha: f64, z: &ChainState) {
        let abar = (model.abar)(z);
        let eps = noise.eval_with(z, &abar);
        let a = &model.a_avg;
        let tilde_a = &abar - a;
        let j0_drive = &tilde_a * &self.j0 * alpha;
        let j1_drive = &tilde_a * &self.j1 * alpha;

        self.h1 -= &abar * &self.h1 * alpha + &j1_drive;
        self.j1 -= a * &self.j1 * alpha + &j0_drive;
        self.h0 -= &abar * &self.h0 * alpha + &j0_drive;
        self.j0 += (&eps - a * &self.j0) * alpha;
        self.theta_tilde += (&eps - &abar * &self.theta_tilde) * alpha;
        self.theta_tr -= &abar * &self.theta_tr * alpha;
    }

    /// Relative gaps of `θ̃ = θ̃^(tr) + J⁽⁰⁾ + H⁽⁰⁾` and `H⁽⁰⁾ = J⁽¹⁾ + H⁽¹⁾`.
    pub fn identity_gaps(&self) -> (f64, f64) {
        let rel = |gap: f64, scale: f64| if scale > 0.0 { gap / scale } else { gap };
        let g1 = (&self.theta_tilde - &self.theta_tr - &self.j0 - &self.h0).norm();
        let s1 = self.theta_tilde.norm().max(self.theta_tr.norm()).max(self.j0.norm()).max(self.h0.norm());
        let g2 = (&self.h0 - &self.j1 - &self.h1).norm();
        let s2 = self.h0.norm().max(self.j1.norm()).max(self.h1.norm());
        (rel(g1, s1), rel(g2, s2))
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub steps: Vec<u64>,
    pub theta_tilde: Vec<Vector>,
    pub theta_tr: Vec<Vector>,
    pub j0: Vec<Vector>,
    pub h0: Vec<Vector>,
    pub j1: Vec<Vector>,
    pub h1: Vec<Vector>,
    pub path: Vec<ChainState>,
}

impl Decomposition {
    fn record(&mut self, k: u64, s: &DecompositionState) {
        self.steps.push(k);
        self.theta_tilde.push(s.theta_tilde.clone());
        self.theta_tr.push(s.theta_tr.clone());
        self.j0.push(s.j0.clone());
        self.h0.push(s.h0.clone());
        self.j1.push(s.j1.clone());
        self.h1.push(s.h1.clone());
    }

    /// Largest relative gaps of the two identities over all recorded steps.
    pub fn max_identity_gaps(&self) -> (f64, f64) {
        (0..self.steps.len())
            .map(|i| {
                DecompositionState {
                    theta_tilde: self.theta_tilde[i].clone(),
                    theta_tr: self.theta_tr[i].clone(),
                    j0: self.j0[i].clone(),
                    h0: self.h0[i].clone(),
                    j1: self.j1[i].clone(),
                    h1: self.h1[i].clone(),
                }
                .identity_gaps()
            })
            .fold((0.0, 0.0), |acc, g| (acc.0.max(g.0), acc.1.max(g.1)))
    }

    /// Trajectory dump with the norms of every term.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,thetaTilde_norm,thetaTr_norm,J0_norm,H0_norm,J1_norm,H1_norm\n");
        for i in 0..self.steps.len() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.steps[i],
                self.theta_tilde[i].norm(),
                self.theta_tr[i].norm(),
                self.j0[i].norm(),
                self.h0[i].norm(),
                self.j1[i].norm(),
                self.h1[i].norm()
            ));
        }
        out
    }
}

/// Runs the error recursions on the same path as [`run_lsa`] and records every step `0..=n`.
pub fn decompose_with_key(
    model: &LsaModel,
    schedule: &StepSchedule,
    theta0: &Vector,
    z0: &ChainState,
    n: u64,
    key: StreamKey,
) -> Decomposition {
    let noise = model.noise_vector();
    let mut state = DecompositionState::new(theta0 - &model.theta_star);
    let cap = n as usize + 1;
    let mut out = Decomposition {
        steps: Vec::with_capacity(cap),
        theta_tilde: Vec::with_capacity(cap),
        theta_tr: Vec::with_capacity(cap),
        j0: Vec::with_capacity(cap),
        h0: Vec::with_capacity(cap),
        j1: Vec::with_capacity(cap),
        h1: Vec::with_capacity(cap),
        path: Vec::with_capacity(cap),
    };
    out.record(0, &state);
    out.path.push(z0.clone());
    let mut walk = ChainPath::new(&model.chain, z0.clone(), key);
    for _ in 0..n {
        let (k, z) = walk.advance();
        state.advance(model, &noise, schedule.alpha(k), z);
        out.record(k, &state);
        out.path.push(z.clone());
    }
    out
}

pub fn decompose(
    model: &LsaModel,
    schedule: &StepSchedule,
    theta0: &Vector,
    z0: &ChainState,
    n: u64,
    seed: u64,
) -> Decomposition {
    decompose_with_key(model, schedule, theta0, z0, n, StreamKey::new(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::finite_chain;

    fn two_state() -> LsaModel {
        let p = Matrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let abar: MatrixFn = Arc::new(|z: &ChainState| {
            let v = if z.finite_index() == Some(0) { 2.0 } else { -1.0 };
            Matrix::from_element(1, 1, v)
        });
        let bbar: VectorFn = Arc::new(|z: &ChainState| Vector::from_element(1, z.finite_index().unwrap() as f64));
        build_model(finite_chain(&p).unwrap(), abar, bbar, &Averaging::Exact).unwrap()
    }

    #[test]
    fn exact_average_two_state() {
        let m = two_state();
        assert!((m.a_avg[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((m.theta_star[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn noise_has_zero_mean() {
        let m = two_state();
        let nz = m.noise_vector();
        let mean = 2.0 / 3.0 * nz.eval(&ChainState::Finite(0))[0] + 1.0 / 3.0 * nz.eval(&ChainState::Finite(1))[0];
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn zero_steps_freeze_theta() {
        let m = two_state();
        let theta0 = Vector::from_element(1, 3.0);
        let run = run_lsa(&m, &StepSchedule::Constant { alpha: 0.0 }, &theta0, &ChainState::Finite(0), 20, 1);
        assert!(run.thetas.iter().all(|t| t[0] == 3.0));
    }

    #[test]
    fn identities_hold_along_path() {
        let m = two_state();
        let d = decompose(
            &m,
            &StepSchedule::Constant { alpha: 0.05 },
            &Vector::from_element(1, 2.0),
            &ChainState::Finite(1),
            300,
            9,
        );
        let (g1, g2) = d.max_identity_gaps();
        assert!(g1 < 1e-10 && g2 < 1e-10, "{g1} {g2}");
        let run = run_lsa(&m, &StepSchedule::Constant { alpha: 0.05 }, &Vector::from_element(1, 2.0), &ChainState::Finite(1), 300, 9);
        let last = &run.thetas[300] - &m.theta_star;
        assert!((last[0] - d.theta_tilde[300][0]).abs() < 1e-12);
    }
}
