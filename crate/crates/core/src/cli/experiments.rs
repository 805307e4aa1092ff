//! Experiment runners behind the `lsa-lab` subcommands.

use super::config::{
    AbscissaSpec, CertificateSpec, ConfigError, DriftMethodSpec, EnvelopeMode, ExperimentKind, LoadedConfig, ModelSpec,
};
use super::{CliError, RunOutcome};
use crate::chains::{
    check_drift, finite_chain, gaussian_ar_chain, window_chain, window_state, ChainState, DriftCertificate, DriftMethod,
    DriftReport, MarkovModel, TailLaw,
};
use crate::constants::{
    lsa_constants, stability_constants, td_constants, window_drift, ConstantsReport, LsaInputs, MatrixData,
    StabilityInputs, TdConstantsInputs,
};
use crate::linalg::{spectral_norm, Matrix, Vector};
use crate::lsa::{build_model, decompose, Averaging, LsaModel, MatrixFn, VectorFn};
use crate::rng::StreamKey;
use crate::schedules::{tail_sum_sq, validate_a5, validate_a6, weighted_sum_bounds, weighted_sum_identity, StepSchedule};
use crate::stability::{
    counterexample_exact, envelope_curve, estimate_gamma_moment, estimate_lsa_moment, fit_decay, theory_envelope,
    Abscissa, MomentSeries, StabilityError, Theta0,
};
use crate::td::{build_td_model, feature_covariance, verify_hurwitz_td, FeatureMap, Mrp, TdConfig, TdError};
use rand::Rng;
use std::fmt::Write as _;
use std::sync::Arc;

const IDENTITY_TOL: f64 = 1e-8;
const SCHEDULE_IDENTITY_TOL: f64 = 1e-12;

pub const MOMENT_HEADER: [&str; 11] =
    ["experiment", "component", "n", "sum_alpha", "p", "estimate", "ci_low", "ci_high", "bound", "replicas", "seed"];

/// CSV text whose first line records the config hash, seed and crate version.
pub struct CsvOut {
    writer: csv::Writer<Vec<u8>>,
    preamble: String,
}

impl CsvOut {
    pub fn new(cfg: &LoadedConfig, header: &[&str]) -> Self {
        let preamble = format!(
            "# config_sha256={} seed={} version={}\n",
            cfg.hash,
            cfg.config.seed,
            env!("CARGO_PKG_VERSION")
        );
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer, preamble }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self) -> String {
        let body = String::from_utf8(self.writer.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        self.preamble + &body
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

fn moment_rows(out: &mut CsvOut, experiment: &str, component: &str, s: &MomentSeries, bound: Option<&[f64]>) {
    for (i, pt) in s.points.iter().enumerate() {
        let b = bound.map(|b| num(b[i])).unwrap_or_default();
        out.row([
            experiment.to_string(),
            component.to_string(),
            pt.n.to_string(),
            num(pt.sum_alpha),
            num(s.p),
            num(pt.estimate),
            num(pt.ci_low),
            num(pt.ci_high),
            b,
            s.replicas.to_string(),
            s.seed.to_string(),
        ]);
    }
}

fn input_err(key: &str, e: impl ToString) -> CliError {
    CliError::Config(ConfigError::invalid(key, e.to_string()))
}

fn to_matrix(rows: &[Vec<f64>], key: &str) -> Result<Matrix, CliError> {
    let cols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(input_err(key, "must be a non-empty rectangular table"));
    }
    Ok(Matrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

fn read_csv_table(cfg: &LoadedConfig, path: &std::path::Path, key: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let full = cfg.resolve(path);
    let text = std::fs::read_to_string(&full).map_err(|e| input_err(key, format!("{}: {e}", full.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| input_err(key, e))).collect())
        .collect()
}

/// Parsed finite model: kernel plus optional per-state `Ā` and `b̄`.
struct FiniteModel {
    kernel: Matrix,
    z0: usize,
    abar: Option<Vec<Matrix>>,
    bbar: Option<Vec<Vector>>,
}

impl FiniteModel {
    fn states(&self) -> usize {
        self.kernel.nrows()
    }

    fn chain(&self) -> Result<MarkovModel, CliError> {
        finite_chain(&self.kernel).map_err(|e| input_err("model.kernel", e))
    }

    fn matrix_fn(&self) -> Result<MatrixFn, CliError> {
        let mats = self.abar.clone().ok_or_else(|| CliError::Config(ConfigError::MissingKey("model.abar".into())))?;
        Ok(Arc::new(move |z: &ChainState| mats[z.finite_index().expect("finite state")].clone()))
    }

    fn vector_fn(&self, d: usize) -> VectorFn {
        match self.bbar.clone() {
            Some(v) => Arc::new(move |z: &ChainState| v[z.finite_index().expect("finite state")].clone()),
            None => Arc::new(move |_| Vector::zeros(d)),
        }
    }

    fn dim(&self) -> Option<usize> {
        self.abar.as_ref().map(|m| m[0].nrows())
    }

    fn lsa_model(&self) -> Result<LsaModel, CliError> {
        let d = self.dim().ok_or_else(|| CliError::Config(ConfigError::MissingKey("model.abar".into())))?;
        build_model(self.chain()?, self.matrix_fn()?, self.vector_fn(d), &Averaging::Exact)
            .map_err(|e| input_err("model.abar", e))
    }
}

fn finite_model(cfg: &LoadedConfig) -> Result<FiniteModel, CliError> {
    let spec = cfg.config.model.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("model".into())))?;
    let ModelSpec::Finite { kernel, kernel_file, z0, abar, bbar } = spec else {
        return Err(input_err("model.kind", "this experiment needs a finite model"));
    };
    let rows = match (kernel, kernel_file) {
        (Some(k), None) => k.clone(),
        (None, Some(f)) => read_csv_table(cfg, f, "model.kernel_file")?,
        (None, None) => return Err(CliError::Config(ConfigError::MissingKey("model.kernel".into()))),
        (Some(_), Some(_)) => return Err(input_err("model.kernel", "give either kernel or kernel_file")),
    };
    let kernel = to_matrix(&rows, "model.kernel")?;
    let s = kernel.nrows();
    if *z0 >= s {
        return Err(input_err("model.z0", format!("state {z0} outside 0..{s}")));
    }
    let abar = match abar {
        Some(list) => {
            if list.len() != s {
                return Err(input_err("model.abar", format!("{} matrices for {s} states", list.len())));
            }
            let mats = list.iter().map(|m| to_matrix(m, "model.abar")).collect::<Result<Vec<_>, _>>()?;
            let d = mats[0].nrows();
            if mats.iter().any(|m| m.nrows() != d || m.ncols() != d) {
                return Err(input_err("model.abar", "matrices must all be square of one size"));
            }
            Some(mats)
        }
        None => None,
    };
    let bbar = match bbar {
        Some(list) => {
            let d = abar.as_ref().map(|m| m[0].nrows());
            if list.len() != s || list.iter().any(|v| Some(v.len()) != d) {
                return Err(input_err("model.bbar", "need one vector of length d per state"));
            }
            Some(list.iter().map(|v| Vector::from_column_slice(v)).collect())
        }
        None => None,
    };
    Ok(FiniteModel { kernel, z0: *z0, abar, bbar })
}

fn certificate(cfg: &LoadedConfig, kernel: Option<&Matrix>) -> Result<DriftCertificate, CliError> {
    let spec =
        cfg.config.certificate.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("certificate".into())))?;
    let need_kernel = || kernel.ok_or_else(|| input_err("certificate.kind", "needs a finite model"));
    let cert = match spec {
        CertificateSpec::FiniteUniform { c, delta, horizon } => {
            DriftCertificate::finite_uniform(need_kernel()?, *c, *delta, *horizon)
        }
        CertificateSpec::FiniteLevels { levels, c, delta, r0, horizon } => {
            DriftCertificate::finite_levels(need_kernel()?, levels, *c, *delta, *r0, *horizon)
        }
        CertificateSpec::GaussianArAbs { c, r0 } => match &cfg.config.model {
            Some(ModelSpec::GaussianAr { rho, sigma, .. }) => DriftCertificate::gaussian_ar_abs(*rho, *sigma, *c, *r0),
            _ => return Err(input_err("certificate.kind", "gaussian-ar-abs needs a gaussian-ar model")),
        },
    };
    cert.map_err(|e| input_err("certificate", e))
}

fn theta0(cfg: &LoadedConfig, d: usize) -> Result<Theta0, CliError> {
    let init = cfg.config.init.clone().unwrap_or_default();
    let mean = match init.theta0 {
        Some(v) if v.len() == d => Vector::from_vec(v),
        Some(v) => return Err(input_err("init.theta0", format!("length {} for dimension {d}", v.len()))),
        None => Vector::zeros(d),
    };
    if !(init.std >= 0.0 && init.std.is_finite()) {
        return Err(input_err("init.std", "must be non-negative"));
    }
    Ok(if init.std > 0.0 { Theta0::Gaussian { mean, std: init.std } } else { Theta0::Fixed(mean) })
}

fn grid(cfg: &LoadedConfig) -> Result<Vec<u64>, CliError> {
    let g = cfg.config.grid.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("grid".into())))?;
    Ok(g.resolve()?)
}

fn schedule(cfg: &LoadedConfig) -> Result<&StepSchedule, CliError> {
    cfg.config.schedule.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("schedule".into())))
}

fn stability_error(e: StabilityError) -> CliError {
    match e {
        StabilityError::TooFewReplicas { .. } | StabilityError::InvalidOrder(_) | StabilityError::InvalidGrid => {
            input_err("replicas", e)
        }
        other => CliError::Compute(other.to_string()),
    }
}

fn max_deviation<T>(items: &[T], mean: &T, norm: impl Fn(&T, &T) -> f64) -> f64 {
    items.iter().map(|x| norm(x, mean)).fold(0.0, f64::max)
}

/// Constants report for a finite model at each configured moment order.
fn constants_report(cfg: &LoadedConfig, fm: &FiniteModel, model: &LsaModel) -> Result<ConstantsReport, CliError> {
    let cs = cfg.config.constants.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("constants".into())))?;
    let cert = certificate(cfg, Some(&fm.kernel))?;
    let matrix = MatrixData::from_matrix(&model.a_avg).map_err(|e| input_err("model.abar", e))?;
    let mats = fm.abar.as_ref().expect("model has matrices");
    let c_a = match cs.c_a {
        Some(v) => v,
        None => max_deviation(mats, &model.a_avg, |m, a| spectral_norm(&(m - a))),
    };
    let c_bk = match cs.c_bk {
        Some(v) => v,
        None => match &fm.bbar {
            Some(v) => max_deviation(v, &model.b_avg, |x, b| (x - b).norm()),
            None => 0.0,
        },
    };
    let horizon = cfg.config.grid.as_ref().and_then(|g| g.resolve().ok()).and_then(|g| g.last().copied()).unwrap_or(10_000);
    let c_alpha = match (cs.c_alpha, &cfg.config.schedule) {
        (Some(v), _) => v,
        (None, Some(s)) => validate_a5(s, matrix.a, horizon).map_err(|e| input_err("schedule", e))?.minimal_c_alpha,
        (None, None) => 0.0,
    };

    let mut report = ConstantsReport::new();
    report.add_matrix(&matrix);
    report.add_certificate(&cert);
    report.input("beta", cs.beta).input("epsilon", cs.epsilon).input("C_A", c_a).input("m", cs.m);
    for p in &cfg.config.p {
        let mut inputs = StabilityInputs::new(matrix.clone(), cs.beta, c_a, *p);
        inputs.epsilon = cs.epsilon;
        inputs.m = cs.m;
        let st = stability_constants(&cert, &inputs).map_err(|e| input_err("constants", e))?;
        report.add_stability(&st);
        if let Some(k) = cs.k {
            report.input("K", k).input("C_bK", c_bk).input("c_alpha", c_alpha);
            let li = LsaInputs {
                stability: inputs,
                c_bk,
                k,
                theta_star_norm: model.theta_star.norm(),
                b_norm: model.b_avg.norm(),
                c_alpha,
            };
            match lsa_constants(&cert, &li) {
                Ok(l) => report.add_lsa(&l),
                Err(e) => report.warn(format!("LSA constants skipped at p = {p}: {e}")),
            }
        }
    }
    if let Some(td) = &cfg.config.td {
        let (_, features, reward) = td_parts(cfg, fm, td)?;
        let states: Vec<ChainState> = (0..fm.states()).map(ChainState::Finite).collect();
        let c_psi = states.iter().map(|z| (features.psi)(z).norm()).fold(0.0, f64::max);
        let c_rk = reward.iter().map(|r| r.abs()).fold(0.0, f64::max);
        let inp = TdConstantsInputs {
            tau: td.tau,
            gamma: td.gamma,
            lambda_trace: td.lambda,
            c_psi,
            c_rk,
            beta: cs.beta,
            k: cs.k.unwrap_or(8.0),
        };
        report.input("tau", td.tau as f64).input("gamma", td.gamma).input("lambda_trace", td.lambda);
        report.input("C_psi", c_psi).input("C_RK", c_rk);
        let t = td_constants(&cert, &inp).map_err(|e| input_err("td", e))?;
        report.add_td(&t);
    }
    Ok(report)
}

fn td_parts(
    cfg: &LoadedConfig,
    fm: &FiniteModel,
    td: &super::config::TdSpec,
) -> Result<(Mrp, FeatureMap, Vec<f64>), CliError> {
    let reward = match (&td.reward, &td.reward_file) {
        (Some(r), None) => r.clone(),
        (None, Some(f)) => read_csv_table(cfg, f, "td.reward_file")?.into_iter().flatten().collect(),
        (None, None) => return Err(CliError::Config(ConfigError::MissingKey("td.reward".into()))),
        (Some(_), Some(_)) => return Err(input_err("td.reward", "give either reward or reward_file")),
    };
    let features = match (&td.features, &td.features_file) {
        (Some(f), None) => Some(to_matrix(f, "td.features")?),
        (None, Some(p)) => Some(to_matrix(&read_csv_table(cfg, p, "td.features_file")?, "td.features_file")?),
        (None, None) => None,
        (Some(_), Some(_)) => return Err(input_err("td.features", "give either features or features_file")),
    };
    let features = match features {
        Some(m) if m.nrows() != fm.states() => {
            return Err(input_err("td.features", format!("{} rows for {} states", m.nrows(), fm.states())))
        }
        Some(m) => FeatureMap::from_matrix(&m),
        None => FeatureMap::one_hot(fm.states()),
    };
    let mrp = Mrp::finite(&fm.kernel, reward.clone(), td.gamma).map_err(|e| input_err("td", e))?;
    Ok((mrp, features, reward))
}

pub fn run_stability(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let fm = finite_model(cfg)?;
    let model = fm.lsa_model()?;
    let sched = schedule(cfg)?;
    let grid = grid(cfg)?;
    let spec = cfg.config.stability.clone().unwrap_or_default();
    let z0 = ChainState::Finite(fm.z0);
    let c = &cfg.config;
    let mut outcome = RunOutcome::default();
    let mut csv = CsvOut::new(cfg, &MOMENT_HEADER);
    let a = crate::linalg::solve_lyapunov(&model.a_avg).map_err(|e| input_err("model.abar", e))?.a;
    let _ = writeln!(outcome.summary, "experiment=stability");
    let _ = writeln!(outcome.summary, "a={a:e}");

    let report = match (&c.certificate, &c.constants, spec.envelope) {
        (Some(_), Some(_), EnvelopeMode::Checked | EnvelopeMode::Uncapped) => Some(constants_report(cfg, &fm, &model)?),
        _ => None,
    };
    let v_z0 = match &report {
        Some(_) => certificate(cfg, Some(&fm.kernel))?.v_at(&z0),
        None => f64::NAN,
    };
    for p in &c.p {
        let series = estimate_gamma_moment(&model.chain, &model.abar, sched, &z0, *p, &grid, c.replicas, c.seed)
            .map_err(stability_error)?;
        let bound: Option<Vec<f64>> = match (&report, spec.envelope) {
            (Some(r), EnvelopeMode::Checked) => match theory_envelope(r, sched, v_z0, *p, &grid) {
                Ok(b) => Some(b),
                Err(StabilityError::StepAboveCap { alpha1, cap }) => {
                    let _ = writeln!(
                        outcome.summary,
                        "envelope_p{p}=not compared: alpha_1 = {alpha1:e} exceeds alpha_inf = {cap:e}"
                    );
                    None
                }
                Err(e) => return Err(CliError::Compute(e.to_string())),
            },
            (Some(r), EnvelopeMode::Uncapped) => {
                let c_st = r.get(&format!("C_st_p{p}")).unwrap_or(f64::NAN);
                Some(envelope_curve(c_st, a, sched, v_z0, *p, &grid))
            }
            _ => None,
        };
        if let Some(b) = &bound {
            let worst = series.points.iter().zip(b).map(|(pt, b)| pt.estimate / b).fold(0.0, f64::max);
            let _ = writeln!(outcome.summary, "envelope_ratio_max_p{p}={worst:e}");
            for (pt, b) in series.points.iter().zip(b) {
                if !(pt.estimate <= *b) {
                    outcome.failures.push(format!("estimate {:e} exceeds envelope {b:e} at n = {}", pt.estimate, pt.n));
                }
            }
        }
        let window = spec.fit_window.map(|[lo, hi]| (lo, hi)).unwrap_or((grid[0], *grid.last().unwrap()));
        let abscissa = match spec.abscissa {
            AbscissaSpec::SumAlpha => Abscissa::SumAlpha,
            AbscissaSpec::LogN => Abscissa::LogN,
        };
        match fit_decay(&series, abscissa, window) {
            Ok(f) => {
                let _ = writeln!(outcome.summary, "slope_p{p}={:e}", f.slope);
                let _ = writeln!(outcome.summary, "r_squared_p{p}={:e}", f.r_squared);
                let _ = writeln!(outcome.summary, "reference_slope=-a/8={:e}", -a / 8.0);
            }
            Err(e) => {
                let _ = writeln!(outcome.summary, "fit_p{p}=unavailable: {e}");
            }
        }
        moment_rows(&mut csv, "stability", "gamma", &series, bound.as_deref());
    }
    outcome.files.push(("stability.csv".into(), csv.finish()));
    if let Some(r) = report {
        outcome.files.push(("constants.txt".into(), r.to_key_value()));
    }
    Ok(outcome)
}

fn lsa_like(
    cfg: &LoadedConfig,
    name: &str,
    model: &LsaModel,
    z0: &ChainState,
    outcome: &mut RunOutcome,
) -> Result<(), CliError> {
    let sched = schedule(cfg)?;
    let grid = grid(cfg)?;
    let c = &cfg.config;
    let th0 = theta0(cfg, model.dim())?;
    let mut csv = CsvOut::new(cfg, &MOMENT_HEADER);
    for p in &c.p {
        let m = estimate_lsa_moment(model, sched, &th0, z0, *p, &grid, c.replicas, c.seed).map_err(stability_error)?;
        for (comp, s) in m.components() {
            moment_rows(&mut csv, name, comp, s, None);
        }
        let (g1, g2) = m.identity_gaps;
        let _ = writeln!(outcome.summary, "identity_gap_theta_p{p}={g1:e}");
        let _ = writeln!(outcome.summary, "identity_gap_h0_p{p}={g2:e}");
        if !(g1 <= IDENTITY_TOL && g2 <= IDENTITY_TOL) {
            outcome.failures.push(format!("decomposition identities off by ({g1:e}, {g2:e})"));
        }
        let window = c
            .td
            .as_ref()
            .and_then(|t| t.fit_window)
            .map(|[lo, hi]| (lo, hi))
            .unwrap_or((grid[0], *grid.last().unwrap()));
        for (comp, s) in [("thetaTilde", &m.theta_tilde), ("J0", &m.j0), ("H0", &m.h0)] {
            if let Ok(f) = fit_decay(s, Abscissa::LogN, window) {
                let _ = writeln!(outcome.summary, "loglog_slope_{comp}_p{p}={:e}", f.slope);
            }
        }
    }
    let mean0 = match &th0 {
        Theta0::Fixed(v) => v.clone(),
        Theta0::Gaussian { mean, .. } => mean.clone(),
    };
    let traj = decompose(model, sched, &mean0, z0, *grid.last().unwrap(), c.seed);
    outcome.files.push((format!("{name}.csv"), csv.finish()));
    outcome.files.push(("trajectory.csv".into(), traj.to_csv()));
    Ok(())
}

pub fn run_lsa(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let fm = finite_model(cfg)?;
    let model = fm.lsa_model()?;
    let mut outcome = RunOutcome::default();
    let _ = writeln!(outcome.summary, "experiment=lsa");
    let _ = writeln!(outcome.summary, "theta_star={:?}", model.theta_star.as_slice());
    lsa_like(cfg, "lsa", &model, &ChainState::Finite(fm.z0), &mut outcome)?;
    Ok(outcome)
}

pub fn run_td(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let fm = finite_model(cfg)?;
    let td = cfg.config.td.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("td".into())))?;
    let (mrp, features, _) = td_parts(cfg, &fm, td)?;
    let tdc = TdConfig { lambda_trace: td.lambda, tau: td.tau };
    let sigma = feature_covariance(&mrp.chain, &features).map_err(|e| input_err("model.kernel", e))?;
    let model = build_td_model(&mrp, &features, &tdc, &Averaging::Exact).map_err(|e| input_err("td", e))?;
    let mut outcome = RunOutcome::default();
    let _ = writeln!(outcome.summary, "experiment=td");
    match verify_hurwitz_td(&model.a_avg, &sigma, mrp.gamma, &tdc) {
        Ok(h) => {
            let _ = writeln!(outcome.summary, "lambda_min_sym={:e}", h.lambda_min_sym);
            let _ = writeln!(outcome.summary, "hurwitz_bound={:e}", h.bound);
        }
        Err(TdError::BoundViolated(h)) => {
            outcome.failures.push(format!(
                "TD mean matrix violates the Hurwitz bound: lambda_min = {:e}, bound = {:e}, abscissa = {:e}",
                h.lambda_min_sym, h.bound, h.spectral_abscissa
            ));
            return Ok(outcome);
        }
        Err(e) => return Err(input_err("td", e)),
    }
    let z0 = ChainState::Window(vec![ChainState::Finite(fm.z0); td.tau + 1]);
    lsa_like(cfg, "td", &model, &z0, &mut outcome)?;
    Ok(outcome)
}

pub fn run_counterexample(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let spec = cfg
        .config
        .counterexample
        .as_ref()
        .ok_or_else(|| CliError::Config(ConfigError::MissingKey("counterexample".into())))?;
    let law = TailLaw::Zeta { s: spec.zeta_s };
    let ce = counterexample_exact(&law, spec.k_max, spec.epsilon, spec.alpha, spec.theta0, spec.n_max)
        .map_err(|e| input_err("counterexample", e))?;
    let mut csv = CsvOut::new(cfg, &MOMENT_HEADER);
    for (n, ((u, l), s)) in ce.u.iter().zip(&ce.lower_bound).zip(&ce.slack).enumerate() {
        csv.row([
            "counterexample".to_string(),
            "u".to_string(),
            n.to_string(),
            num(spec.alpha * n as f64),
            "1".to_string(),
            num(*u),
            num(*u),
            num(*u),
            num(l - s),
            "0".to_string(),
            cfg.config.seed.to_string(),
        ]);
    }
    let mut outcome = RunOutcome::default();
    let growth = ce.u.iter().map(|u| u / ce.u[0]).fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(outcome.summary, "experiment=counterexample");
    let _ = writeln!(outcome.summary, "pi1={:.17e}", ce.pi1);
    let _ = writeln!(outcome.summary, "truncation_mass={:e}", ce.truncation_mass);
    let _ = writeln!(outcome.summary, "max_growth={growth:e}");
    if !ce.bound_holds() {
        outcome.failures.push("u_n falls below the lower bound".into());
    }
    outcome.files.push(("counterexample.csv".into(), csv.finish()));
    Ok(outcome)
}

pub fn run_constants(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let fm = finite_model(cfg)?;
    let model = fm.lsa_model()?;
    let report = constants_report(cfg, &fm, &model)?;
    let mut outcome = RunOutcome::default();
    let bad = report.unflagged_non_finite();
    if !bad.is_empty() {
        outcome.failures.push(format!("non-finite constants without a warning: {}", bad.join(", ")));
    }
    outcome.summary = report.to_key_value();
    outcome.files.push(("constants.txt".into(), report.to_key_value()));
    outcome.files.push(("constants.json".into(), report.to_json() + "\n"));
    Ok(outcome)
}

fn drift_rows(csv: &mut CsvOut, chain: &str, report: &DriftReport) {
    for r in &report.records {
        csv.row([
            chain.to_string(),
            r.state.label(),
            num(r.w),
            num(r.log_pv),
            num(r.log_pv_lower),
            num(r.log_pv_upper),
            num(r.log_bound),
            r.violated.to_string(),
        ]);
    }
}

pub fn run_drift_check(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let spec = cfg.config.drift.clone().unwrap_or_default();
    let model = cfg.config.model.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("model".into())))?;
    let (chain, cert, states, default_method) = match model {
        ModelSpec::Finite { .. } => {
            let fm = finite_model(cfg)?;
            let cert = certificate(cfg, Some(&fm.kernel))?;
            let states: Vec<ChainState> = (0..fm.states()).map(ChainState::Finite).collect();
            (fm.chain()?, cert, states, DriftMethod::Exact)
        }
        ModelSpec::GaussianAr { rho, sigma, .. } => {
            let chain = gaussian_ar_chain(&Matrix::from_element(1, 1, *rho), &Matrix::from_element(1, 1, sigma * sigma))
                .map_err(|e| input_err("model", e))?;
            let cert = certificate(cfg, None)?;
            let xs: Vec<f64> = match (&spec.states, spec.range) {
                (Some(v), None) => v.clone(),
                (None, Some([lo, hi, n])) => {
                    let n = n.max(2.0) as usize;
                    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
                }
                (None, None) => (0..400).map(|i| -20.0 + 40.0 * i as f64 / 399.0).collect(),
                (Some(_), Some(_)) => return Err(input_err("drift.states", "give either states or range")),
            };
            let states = xs.into_iter().map(|x| ChainState::Real(vec![x])).collect();
            (chain, cert, states, DriftMethod::Quadrature)
        }
    };
    let method = match spec.method {
        DriftMethodSpec::Auto => default_method,
        DriftMethodSpec::Exact => DriftMethod::Exact,
        DriftMethodSpec::Quadrature => DriftMethod::Quadrature,
        DriftMethodSpec::MonteCarlo => DriftMethod::MonteCarlo { samples: spec.samples, seed: cfg.config.seed },
    };
    let mut csv = CsvOut::new(cfg, &["chain", "state", "w", "log_pv", "log_pv_lower", "log_pv_upper", "log_bound", "violated"]);
    let mut outcome = RunOutcome::default();
    let _ = writeln!(outcome.summary, "experiment=drift-check");
    let base = check_drift(&chain, &cert, &states, method).map_err(|e| input_err("drift", e))?;
    drift_rows(&mut csv, "base", &base);
    let _ = writeln!(outcome.summary, "base_violations={}", base.violations().count());
    if !base.passed() {
        outcome.failures.push(format!("base certificate fails at {} states", base.violations().count()));
    }
    for &tau in &spec.windows {
        let wd = window_drift(&cert, tau).map_err(|e| input_err("drift.windows", e))?;
        let wcert = crate::td::td_drift_certificate(&cert, &wd).map_err(|e| input_err("drift.windows", e))?;
        let wchain = window_chain(&chain, tau).map_err(|e| input_err("drift.windows", e))?;
        let wstates = window_states(&states, tau, spec.window_samples, cfg.config.seed);
        let rep = check_drift(&wchain, &wcert, &wstates, method).map_err(|e| input_err("drift.windows", e))?;
        let label = format!("window{tau}");
        drift_rows(&mut csv, &label, &rep);
        let _ = writeln!(outcome.summary, "{label}_cP={:e} {label}_bP={:e} {label}_RP={:e}", wd.c_p, wd.b_p, wd.r_p);
        let _ = writeln!(outcome.summary, "{label}_violations={}", rep.violations().count());
        if !rep.passed() {
            outcome.failures.push(format!("window certificate (tau = {tau}) fails at {} states", rep.violations().count()));
        }
    }
    outcome.files.push(("drift.csv".into(), csv.finish()));
    Ok(outcome)
}

/// Every window over a small finite base, otherwise `count` windows with entries drawn from `base`.
fn window_states(base: &[ChainState], tau: usize, count: usize, seed: u64) -> Vec<ChainState> {
    let s = base.len();
    let all_finite = base.iter().all(|z| z.finite_index().is_some());
    let total = (s as f64).powi(tau as i32 + 1);
    if all_finite && total <= count as f64 {
        return (0..total as usize).map(|i| window_state(i, s, tau)).collect();
    }
    let mut rng = StreamKey::new(seed, tau as u64).at_step(0);
    (0..count)
        .map(|_| ChainState::Window((0..=tau).map(|_| base[rng.gen_range(0..s)].clone()).collect()))
        .collect()
}

pub fn run_schedule_check(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    let s = schedule(cfg)?;
    let checks = cfg.config.checks.as_ref().ok_or_else(|| CliError::Config(ConfigError::MissingKey("checks".into())))?;
    let (a, horizon) = (checks.a, checks.horizon);
    let mut out = String::new();
    let mut outcome = RunOutcome::default();
    let _ = writeln!(out, "experiment=schedule-check");
    let a5 = validate_a5(s, a, horizon).map_err(|e| input_err("schedule", e))?;
    let _ = writeln!(out, "a5.minimal_c_alpha={:e}", a5.minimal_c_alpha);
    let _ = writeln!(out, "a5.bound={:e}", a5.bound);
    let _ = writeln!(out, "a5.passes={}", a5.passes);
    if checks.require_a5 && !a5.passes {
        outcome.failures.push("step-size ratio condition fails".into());
    }
    match validate_a6(s, a, horizon) {
        Ok(r) => {
            let _ = writeln!(out, "a6.status={:?}", r.status);
            let _ = writeln!(out, "a6.minimal_c_alpha={:e}", r.minimal_c_alpha);
            let _ = writeln!(out, "a6.bound={:e}", r.bound);
            if checks.require_a6 && r.status != crate::schedules::A6Status::Pass {
                outcome.failures.push("square-summable regime condition fails".into());
            }
        }
        Err(e) => {
            let _ = writeln!(out, "a6.status=error: {e}");
            if checks.require_a6 {
                outcome.failures.push(format!("square-summable regime condition fails: {e}"));
            }
        }
    }
    if let Ok(t) = tail_sum_sq(s, 0) {
        let _ = writeln!(out, "tail_sum_sq_0={:e}", t.value);
    }
    match weighted_sum_identity(s, a, horizon) {
        Ok(id) => {
            let _ = writeln!(out, "identity.lhs={:.17e}", id.lhs);
            let _ = writeln!(out, "identity.rhs={:.17e}", id.rhs);
            let _ = writeln!(out, "identity.gap={:e}", id.gap);
            if !(id.gap <= SCHEDULE_IDENTITY_TOL * id.rhs.abs().max(1.0)) {
                outcome.failures.push(format!("weighted-sum identity gap {:e}", id.gap));
            }
        }
        Err(e) => {
            let _ = writeln!(out, "identity=skipped: {e}");
        }
    }
    for (label, q) in [("weighted", None), ("weighted_tail", Some(0.5))] {
        match weighted_sum_bounds(s, a, 2.0, q, horizon) {
            Ok(w) => {
                let _ = writeln!(out, "{label}.worst_ratio={:e}", w.worst_ratio);
                let _ = writeln!(out, "{label}.holds={}", w.holds);
                if !w.holds {
                    outcome.failures.push(format!("{label} sum bound fails at N = {}", w.worst_n));
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{label}=skipped: {e}");
            }
        }
    }
    outcome.summary = out.clone();
    outcome.files.push(("schedule.txt".into(), out));
    Ok(outcome)
}

pub fn dispatch(cfg: &LoadedConfig) -> Result<RunOutcome, CliError> {
    match cfg.config.experiment {
        ExperimentKind::Stability => run_stability(cfg),
        ExperimentKind::Lsa => run_lsa(cfg),
        ExperimentKind::Td => run_td(cfg),
        ExperimentKind::Counterexample => run_counterexample(cfg),
        ExperimentKind::Constants => run_constants(cfg),
        ExperimentKind::DriftCheck => run_drift_check(cfg),
        ExperimentKind::ScheduleCheck => run_schedule_check(cfg),
    }
}
