mod support;

use lsa_lab::chains::{finite_chain, ChainState};
use lsa_lab::linalg::{solve_lyapunov, spectral_norm, Matrix, Vector};
use lsa_lab::lsa::{build_model, decompose, run_lsa, Averaging, LsaModel, MatrixFn, VectorFn};
use lsa_lab::schedules::StepSchedule;
use proptest::prelude::*;
use std::sync::Arc;
use support::kernel3;
use support::oracles::{h0_direct, j0_direct, j1_direct, transient_direct, PathData};

fn two_dim_model() -> LsaModel {
    let mats = [
        Matrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.5]),
        Matrix::from_row_slice(2, 2, &[-0.5, 0.2, 0.1, 0.4]),
        Matrix::from_row_slice(2, 2, &[1.0, -0.4, 0.6, 0.9]),
    ];
    let rhs = [Vector::from_column_slice(&[1.0, 0.0]), Vector::from_column_slice(&[-1.0, 2.0]), Vector::from_column_slice(&[0.5, -0.5])];
    let abar: MatrixFn = Arc::new(move |z: &ChainState| mats[z.finite_index().unwrap()].clone());
    let bbar: VectorFn = Arc::new(move |z: &ChainState| rhs[z.finite_index().unwrap()].clone());
    build_model(finite_chain(&kernel3()).unwrap(), abar, bbar, &Averaging::Exact).unwrap()
}

fn path_data(model: &LsaModel, schedule: &StepSchedule, path: &[ChainState]) -> PathData {
    let noise = model.noise_vector();
    let d = model.dim();
    let mut alphas = vec![0.0];
    let mut abar = vec![Matrix::zeros(d, d)];
    let mut eps = vec![Vector::zeros(d)];
    for (k, z) in path.iter().enumerate().skip(1) {
        alphas.push(schedule.alpha(k as u64));
        abar.push((model.abar)(z));
        eps.push(noise.eval(z));
    }
    PathData { alphas, abar, eps }
}

fn rel(x: &Vector, y: &Vector) -> f64 {
    let scale = x.norm().max(y.norm());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).norm() / scale
    }
}

#[test]
fn exact_averaging_solves_the_mean_system() {
    let model = two_dim_model();
    let r = &model.a_avg * &model.theta_star - &model.b_avg;
    assert!(r.norm() <= 1e-10 * model.b_avg.norm());
    let (states, weights) = model.chain.stationary_weights().unwrap();
    let mean: Vector = states.iter().zip(&weights).map(|(z, w)| model.noise(z) * *w).fold(Vector::zeros(2), |a, b| a + b);
    assert!(mean.norm() <= 1e-10);
    assert!(solve_lyapunov(&model.a_avg).is_ok());
}

#[test]
fn constant_model_has_no_noise() {
    let abar: MatrixFn = Arc::new(|_: &ChainState| Matrix::from_element(1, 1, 0.7));
    let bbar: VectorFn = Arc::new(|_: &ChainState| Vector::from_element(1, 1.4));
    let model = build_model(finite_chain(&kernel3()).unwrap(), abar, bbar, &Averaging::Exact).unwrap();
    for i in 0..3 {
        assert_eq!(model.noise(&ChainState::Finite(i)).norm(), 0.0);
    }
    assert!((model.theta_star[0] - 2.0).abs() < 1e-14);
}

#[test]
fn replay_is_bit_identical() {
    let model = two_dim_model();
    let s = StepSchedule::Polynomial { c: 0.5, n0: 10.0, t: 0.8 };
    let theta0 = Vector::from_column_slice(&[3.0, -2.0]);
    let a = run_lsa(&model, &s, &theta0, &ChainState::Finite(1), 300, 77);
    let b = run_lsa(&model, &s, &theta0, &ChainState::Finite(1), 300, 77);
    assert_eq!(a.thetas, b.thetas);
    assert_eq!(a.path, b.path);
    let dec = decompose(&model, &s, &theta0, &ChainState::Finite(1), 300, 77);
    assert_eq!(dec.path, a.path);
    for (t, th) in dec.theta_tilde.iter().zip(&a.thetas) {
        assert!(rel(t, &(th - &model.theta_star)) <= 1e-10);
    }
}

#[test]
fn deterministic_product_contracts_on_windows() {
    let model = two_dim_model();
    let sol = solve_lyapunov(&model.a_avg).unwrap();
    let s = StepSchedule::Polynomial { c: sol.alpha_cap, n0: 1.0, t: 0.7 };
    for (from, to) in [(1u64, 50u64), (10, 400), (100, 101)] {
        let mut g = Matrix::identity(2, 2);
        let mut bound = sol.kappa_q.sqrt();
        for l in from..=to {
            let al = s.alpha(l);
            g = (Matrix::identity(2, 2) - &model.a_avg * al) * g;
            bound *= (1.0 - sol.a * al).sqrt();
        }
        assert!(spectral_norm(&g) <= bound * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursions_match_direct_sums(seed in any::<u64>(), n in 1u64..=512, z0 in 0usize..3, c in 0.05f64..0.5) {
        let model = two_dim_model();
        let s = StepSchedule::Polynomial { c, n0: 4.0, t: 0.9 };
        let theta0 = Vector::from_column_slice(&[1.0, 1.0]);
        let dec = decompose(&model, &s, &theta0, &ChainState::Finite(z0), n, seed);
        let (g1, g2) = dec.max_identity_gaps();
        prop_assert!(g1 <= 1e-8 && g2 <= 1e-8);
        prop_assert!(dec.j0[0].norm() == 0.0 && dec.h0[0].norm() == 0.0 && dec.j1[0].norm() == 0.0 && dec.h1[0].norm() == 0.0);

        let pd = path_data(&model, &s, &dec.path);
        let last = n as usize;
        let j0 = j0_direct(&model.a_avg, &pd);
        prop_assert!(rel(&dec.j0[last], &j0[last]) <= 1e-8);
        prop_assert!(rel(&dec.j1[last], &j1_direct(&model.a_avg, &pd)) <= 1e-8);
        prop_assert!(rel(&dec.h0[last], &h0_direct(&model.a_avg, &pd)) <= 1e-8);
        prop_assert!(rel(&dec.theta_tr[last], &transient_direct(&pd, &(theta0 - &model.theta_star))) <= 1e-8);
    }
}
