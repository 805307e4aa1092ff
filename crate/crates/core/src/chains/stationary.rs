use super::{ChainError, TailLaw};
use crate::linalg::{Matrix, Vector};
use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub weights: Vec<f64>,
    /// `‖πP − π‖_∞`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceStationary {
    /// Weights of states `1..=K`.
    pub weights: Vec<f64>,
    /// Total variation distance between the truncated and the untruncated law.
    pub truncation_error: f64,
}

fn reachable(p: &Matrix, transpose: bool) -> Vec<Option<usize>> {
    let n = p.nrows();
    let mut level = vec![None; n];
    level[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if transpose { p[(v, u)] } else { p[(u, v)] };
            if w > 0.0 && level[v].is_none() {
                level[v] = Some(level[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution of an irreducible aperiodic finite kernel.
pub fn stationary_exact(p: &Matrix) -> Result<Stationary, ChainError> {
    super::validate_stochastic(p)?;
    let n = p.nrows();
    let fwd = reachable(p, false);
    let bwd = reachable(p, true);
    if fwd.iter().any(Option::is_none) || bwd.iter().any(Option::is_none) {
        return Err(ChainError::Reducible);
    }
    let mut period = 0u64;
    for u in 0..n {
        for v in 0..n {
            if p[(u, v)] > 0.0 {
                let lu = fwd[u].unwrap() as i64;
                let lv = fwd[v].unwrap() as i64;
                period = gcd(period, (lu + 1 - lv).unsigned_abs());
            }
        }
    }
    if period > 1 {
        return Err(ChainError::Periodic(period));
    }

    let mut m = p.transpose() - Matrix::identity(n, n);
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    let mut rhs = Vector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = m.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(ChainError::Reducible)?;
    let r = &rhs - &m * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let total: f64 = x.iter().sum();
    let weights: Vec<f64> = x.iter().map(|w| (w / total).max(0.0)).collect();
    let pi = Vector::from_vec(weights.clone());
    let residual = (p.tr_mul(&pi) - &pi).amax();
    Ok(Stationary { weights, residual })
}

/// `π(z) = P(Y_K ≥ z)/E[Y_K]` on `{1, …, K}` for the truncated return time `Y_K`.
pub fn stationary_forward_recurrence(law: &TailLaw, k_max: u64) -> Result<RecurrenceStationary, ChainError> {
    law.validate()?;
    let cut = law.tail(k_max + 1);
    let kept = 1.0 - cut;
    let trunc_tail: Vec<f64> = (1..=k_max).map(|z| ((law.tail(z) - cut) / kept).max(0.0)).collect();
    let trunc_mean: f64 = trunc_tail.iter().sum();
    let weights: Vec<f64> = trunc_tail.iter().map(|t| t / trunc_mean).collect();

    let mean = law.mean();
    let inside: f64 = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (w - law.tail(i as u64 + 1) / mean).abs())
        .sum();
    let outside = law.tail_sum_beyond(k_max) / mean;
    Ok(RecurrenceStationary { weights, truncation_error: 0.5 * (inside + outside) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_example() {
        let p = Matrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let s = stationary_exact(&p).unwrap();
        assert!((s.weights[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((s.weights[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!(s.residual <= 1e-12);
    }

    #[test]
    fn identity_is_reducible() {
        assert_eq!(stationary_exact(&Matrix::identity(2, 2)), Err(ChainError::Reducible));
    }

    #[test]
    fn flip_is_periodic() {
        let p = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(stationary_exact(&p), Err(ChainError::Periodic(2)));
    }

    #[test]
    fn cubic_law_first_weight() {
        let st = stationary_forward_recurrence(&TailLaw::Zeta { s: 3.0 }, 10_000).unwrap();
        let expected = super::super::riemann_zeta(3.0) / super::super::riemann_zeta(2.0);
        assert!((st.weights[0] - expected).abs() <= 1e-3);
        assert!(st.truncation_error < 1e-3);
    }
}
