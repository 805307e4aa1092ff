#![allow(dead_code)]

pub mod dual;
pub mod oracles;

use lsa_lab::chains::{ChainState, DriftCertificate};
use lsa_lab::constants::{ConstantsReport, LsaInputs, MatrixData, StabilityInputs};
use lsa_lab::linalg::Matrix;
use lsa_lab::lsa::MatrixFn;
use rand::Rng;
use std::sync::Arc;

/// 3-state doubly stochastic kernel with uniform stationary law.
pub fn kernel3() -> Matrix {
    Matrix::from_row_slice(3, 3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5])
}

pub const SCALARS3: [f64; 3] = [2.0, -1.0, 0.5];

pub fn scalar_abar(values: &'static [f64]) -> MatrixFn {
    Arc::new(move |z: &ChainState| Matrix::from_element(1, 1, values[z.finite_index().unwrap()]))
}

/// The finite uniformly ergodic collapse used throughout: `W ≡ 1`, `c = 1/2`, mean `A = 1/2`.
pub fn collapse() -> (DriftCertificate, MatrixData) {
    let cert = DriftCertificate::finite_uniform(&kernel3(), 0.5, 1.0, 200).unwrap();
    let md = MatrixData::from_matrix(&Matrix::from_element(1, 1, 0.5)).unwrap();
    (cert, md)
}

/// Birth-death kernel on `{0, …, n−1}` drifting towards 0.
pub fn birth_death(n: usize, down: f64, up: f64) -> Matrix {
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let d = if i > 0 { down } else { 0.0 };
        let u = if i + 1 < n { up } else { 0.0 };
        if i > 0 {
            p[(i, i - 1)] = d;
        }
        if i + 1 < n {
            p[(i, i + 1)] = u;
        }
        p[(i, i)] = 1.0 - d - u;
    }
    p
}

/// Level certificate `W(i) = 1 + step·i` on a birth-death chain with `δ = 3/4`,
/// using the fraction `c_frac` of the largest drift rate the chain supports.
pub fn levels_certificate(n: usize, down: f64, up: f64, step: f64, c_frac: f64) -> (Matrix, Vec<f64>, DriftCertificate) {
    let p = birth_death(n, down, up);
    let w: Vec<f64> = (0..n).map(|i| 1.0 + step * i as f64).collect();
    let r0 = 1.0 + 0.5 * step;
    let c_max = (0..n)
        .filter(|&i| w[i] > r0)
        .map(|i| {
            let pv: f64 = (0..n).map(|j| p[(i, j)] * w[j].exp()).sum();
            (w[i] - pv.ln()) / w[i].powf(0.75)
        })
        .fold(f64::INFINITY, f64::min);
    let cert = DriftCertificate::finite_levels(&p, &w, c_frac * c_max, 0.75, r0, 400).unwrap();
    (p, w, cert)
}

/// Random `n`-state kernel with every entry at least `floor/n`.
pub fn random_kernel(rng: &mut impl Rng, n: usize, floor: f64) -> Matrix {
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let raw: Vec<f64> = (0..n).map(|_| floor / n as f64 + rng.gen::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        for j in 0..n {
            p[(i, j)] = raw[j] / s;
        }
    }
    p
}

/// Report and second evaluation for the stability chain at each `p`, plus optional LSA and window constants.
pub fn report_and_dual(
    cert: &DriftCertificate,
    md: &MatrixData,
    beta: f64,
    c_a: f64,
    ps: &[f64],
    lsa: Option<&dual::LsaPrimitives>,
    taus: &[usize],
) -> (ConstantsReport, dual::Values) {
    let mut report = ConstantsReport::new();
    let mut values = dual::Values::new();
    let pr = dual::Primitives { cert, matrix: md, beta, c_a, epsilon: 0.5, m: 0.0 };
    for &p in ps {
        let inputs = StabilityInputs::new(md.clone(), beta, c_a, p);
        let st = lsa_lab::constants::stability_constants(cert, &inputs).unwrap();
        report.add_stability(&st);
        dual::stability(&pr, p, &mut values);
        if let Some(lp) = lsa.filter(|lp| p >= 2.0 && p <= lp.k / 4.0) {
            let li = LsaInputs {
                stability: inputs,
                c_bk: lp.c_bk,
                k: lp.k,
                theta_star_norm: lp.theta_star_norm,
                b_norm: lp.b_norm,
                c_alpha: lp.c_alpha,
            };
            report.add_lsa(&lsa_lab::constants::lsa_constants(cert, &li).unwrap());
            dual::lsa(&pr, lp, p, &mut values);
        }
    }
    for &tau in taus {
        report.add_window(&lsa_lab::constants::window_drift(cert, tau).unwrap());
        dual::window(cert, tau, &mut values);
    }
    (report, values)
}
