//! Dense linear algebra for small systems: Lyapunov solves, Q-weighted norms,
//! contraction checks and ordered products of random factors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest real part of `-A` must stay below minus this margin for `A` to count as Hurwitz.
pub const HURWITZ_MARGIN: f64 = 1e-9;
/// Threshold on the smallest eigenvalue of the symmetric part.
pub const POSITIVITY_MARGIN: f64 = 1e-10;
/// Slack allowed on the contraction inequalities.
pub const CONTRACTION_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not Hurwitz: spectral abscissa of -A is {abscissa:.6e}")]
    NotHurwitz { abscissa: f64 },
    #[error("Lyapunov residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    IllConditioned { residual: f64, tolerance: f64 },
    #[error("weight matrix is not symmetric positive definite")]
    QNotPd,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step size {alpha:.6e} outside (0, {cap:.6e}]")]
    StepOutOfRange { alpha: f64, cap: f64 },
    #[error("symmetric part is positive definite (min eigenvalue {lambda_min_sym:.3e}) yet the matrix is not Hurwitz")]
    PositivityViolation { lambda_min_sym: f64 },
}

/// Solution of `AᵀQ + QA = I` together with the scalars derived from it.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub q: Matrix,
    /// Condition number `λmax(Q)/λmin(Q)`.
    pub kappa_q: f64,
    /// Contraction rate `1 / (2‖Q‖)`.
    pub a: f64,
    /// Largest admissible step `(1/2)‖A‖_Q⁻²‖Q‖⁻¹`.
    pub alpha_cap: f64,
    pub q_norm_a: f64,
    pub lambda_min_q: f64,
    pub lambda_max_q: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionRecord {
    pub alpha: f64,
    pub q_norm_sq: f64,
    pub q_bound: f64,
    pub norm: f64,
    pub norm_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityCheck {
    pub lambda_min_sym: f64,
    pub spectral_abscissa: f64,
    pub positive: bool,
    pub hurwitz: bool,
}

fn check_square(m: &Matrix) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    Ok(m.nrows())
}

/// Largest real part among the eigenvalues of `m`.
pub fn spectral_abscissa(m: &Matrix) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral radius (largest eigenvalue modulus).
pub fn spectral_radius(m: &Matrix) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Extreme eigenvalues `(min, max)` of `(m + mᵀ)/2`.
pub fn sym_eigen_extremes(m: &Matrix) -> (f64, f64) {
    let s = (m + m.transpose()) * 0.5;
    let ev = s.symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Operator 2-norm via singular values.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Operator 2-norm by power iteration on `mᵀm`.
///
/// Runs at most `max_iter` steps and stops once the relative change of the
/// estimate drops below `tol`; if that never happens the exact SVD value is
/// returned, so the result is always accurate.
pub fn power_spectral_norm(m: &Matrix, max_iter: usize, tol: f64) -> f64 {
    let n = m.ncols();
    if n == 1 {
        return m.column(0).norm();
    }
    if m.nrows() == 1 {
        return m.row(0).norm();
    }
    let mut v = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut prev = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let u = m.tr_mul(&w);
        let un = u.norm();
        if un == 0.0 {
            break;
        }
        let est = w.norm();
        v = u / un;
        if (est - prev).abs() <= tol * est.max(f64::MIN_POSITIVE) {
            return (m * &v).norm();
        }
        prev = est;
    }
    spectral_norm(m)
}

/// Norm used by the Monte Carlo estimators: 20 power steps at tolerance 1e-10.
pub fn operator_norm(m: &Matrix) -> f64 {
    power_spectral_norm(m, 20, 1e-10)
}

/// Solves `AᵀQ + QA = I` through the vectorised `d²×d²` linear system.
pub fn solve_lyapunov(a: &Matrix) -> Result<LyapunovSolution, LinalgError> {
    let d = check_square(a)?;
    let abscissa = spectral_abscissa(&(-a));
    if abscissa >= -HURWITZ_MARGIN {
        return Err(LinalgError::NotHurwitz { abscissa });
    }

    let at = a.transpose();
    let eye = Matrix::identity(d, d);
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = Vector::from_iterator(d * d, eye.iter().cloned());
    let lu = k.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or(LinalgError::IllConditioned { residual: f64::INFINITY, tolerance: 1e-10 * d as f64 })?;
    // one step of iterative refinement
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let q_raw = Matrix::from_column_slice(d, d, x.as_slice());
    let q = (&q_raw + q_raw.transpose()) * 0.5;

    let residual = (a.transpose() * &q + &q * a - &eye).norm();
    let tolerance = 1e-10 * d as f64;
    if !(residual <= tolerance) {
        return Err(LinalgError::IllConditioned { residual, tolerance });
    }

    let ev = q.clone().symmetric_eigenvalues();
    let lambda_min_q = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda_max_q = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lambda_min_q > 0.0) {
        return Err(LinalgError::QNotPd);
    }
    let q_norm_a = q_norm(a, &q)?;
    Ok(LyapunovSolution {
        kappa_q: lambda_max_q / lambda_min_q,
        a: 0.5 / lambda_max_q,
        alpha_cap: 0.5 / (q_norm_a * q_norm_a * lambda_max_q),
        q_norm_a,
        lambda_min_q,
        lambda_max_q,
        residual,
        q,
    })
}

/// Operator norm induced by `‖x‖_Q = sqrt(xᵀQx)`.
///
/// Uses the Cholesky factor `Q = LLᵀ`, so that `‖M‖_Q = ‖Lᵀ M L⁻ᵀ‖₂`.
pub fn q_norm(m: &Matrix, q: &Matrix) -> Result<f64, LinalgError> {
    let d = check_square(q)?;
    if m.nrows() != d || m.ncols() != d {
        return Err(LinalgError::DimensionMismatch { expected: d, got: m.nrows() });
    }
    let chol = q.clone().cholesky().ok_or(LinalgError::QNotPd)?;
    let l = chol.l();
    let xt = l
        .solve_lower_triangular(&m.transpose())
        .ok_or(LinalgError::QNotPd)?;
    let b = l.transpose() * xt.transpose();
    Ok(spectral_norm(&b))
}

/// Checks both contraction inequalities for `I - αA` at one step size.
pub fn check_contraction(
    a: &Matrix,
    sol: &LyapunovSolution,
    alpha: f64,
) -> Result<ContractionRecord, LinalgError> {
    let d = check_square(a)?;
    if sol.q.nrows() != d {
        return Err(LinalgError::DimensionMismatch { expected: d, got: sol.q.nrows() });
    }
    if !(alpha > 0.0 && alpha <= sol.alpha_cap) {
        return Err(LinalgError::StepOutOfRange { alpha, cap: sol.alpha_cap });
    }
    let step = Matrix::identity(d, d) - a * alpha;
    let qn = q_norm(&step, &sol.q)?;
    let q_norm_sq = qn * qn;
    let q_bound = 1.0 - sol.a * alpha;
    let norm = spectral_norm(&step);
    let norm_bound = sol.kappa_q.sqrt() * (1.0 - sol.a * alpha / 2.0);
    let holds = q_norm_sq <= q_bound + CONTRACTION_SLACK && norm <= norm_bound + CONTRACTION_SLACK;
    Ok(ContractionRecord { alpha, q_norm_sq, q_bound, norm, norm_bound, holds })
}

/// Ordered product `F_n ⋯ F_1` of factors listed in time order; the empty product is `I_d`.
pub fn gamma_product(dim: usize, factors: &[Matrix]) -> Result<Matrix, LinalgError> {
    let mut g = Matrix::identity(dim, dim);
    for f in factors {
        if f.nrows() != dim || f.ncols() != dim {
            return Err(LinalgError::DimensionMismatch { expected: dim, got: f.nrows() });
        }
        g = f * g;
    }
    Ok(g)
}

/// Confirms that a positive definite symmetric part forces `A` to be Hurwitz.
pub fn positivity_implies_hurwitz_check(a: &Matrix) -> Result<PositivityCheck, LinalgError> {
    check_square(a)?;
    let (lambda_min_sym, _) = sym_eigen_extremes(a);
    let abscissa = spectral_abscissa(&(-a));
    let positive = lambda_min_sym > POSITIVITY_MARGIN;
    let hurwitz = abscissa < -HURWITZ_MARGIN;
    if positive && !hurwitz {
        return Err(LinalgError::PositivityViolation { lambda_min_sym });
    }
    Ok(PositivityCheck { lambda_min_sym, spectral_abscissa: abscissa, positive, hurwitz })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_lyapunov() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let s = solve_lyapunov(&a).unwrap();
        assert_relative_eq!(s.q[(0, 0)], 0.5, epsilon = 1e-14);
        assert_relative_eq!(s.q[(1, 1)], 0.25, epsilon = 1e-14);
        assert_relative_eq!(s.q[(0, 1)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(s.kappa_q, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.a, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_hurwitz_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(solve_lyapunov(&a), Err(LinalgError::NotHurwitz { .. })));
    }

    #[test]
    fn scalar_cap_matches_closed_form() {
        let a = Matrix::from_element(1, 1, 3.0);
        let s = solve_lyapunov(&a).unwrap();
        assert_relative_eq!(s.q[(0, 0)], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(s.a, 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.alpha_cap, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn q_norm_diagonal_example() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0]));
        let m = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, -5.0]));
        assert_relative_eq!(q_norm(&m, &q).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn q_norm_rejects_indefinite() {
        let q = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        let m = Matrix::identity(2, 2);
        assert_eq!(q_norm(&m, &q), Err(LinalgError::QNotPd));
    }

    #[test]
    fn empty_product_is_identity() {
        assert_eq!(gamma_product(3, &[]).unwrap(), Matrix::identity(3, 3));
    }

    #[test]
    fn product_order_latest_leftmost() {
        let f1 = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let f2 = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let g = gamma_product(2, &[f1.clone(), f2.clone()]).unwrap();
        assert_eq!(g, f2 * f1);
    }

    #[test]
    fn contraction_out_of_range() {
        let a = Matrix::identity(2, 2);
        let s = solve_lyapunov(&a).unwrap();
        let err = check_contraction(&a, &s, 2.0 * s.alpha_cap).unwrap_err();
        assert!(matches!(err, LinalgError::StepOutOfRange { .. }));
    }

    #[test]
    fn power_norm_agrees_with_svd() {
        let m = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.2, 0.0, 1.0]);
        assert_relative_eq!(operator_norm(&m), spectral_norm(&m), epsilon = 1e-9);
    }

    #[test]
    fn positivity_on_rotation() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, -5.0, 5.0, 1.0]);
        let c = positivity_implies_hurwitz_check(&a).unwrap();
        assert!(c.positive && c.hurwitz);
    }
}
