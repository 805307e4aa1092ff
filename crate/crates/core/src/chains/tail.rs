//! Return-time laws for forward recurrence chains.

use super::ChainError;

/// Law of the renewal time `Y ≥ 1`, described through its tail `P(Y ≥ k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TailLaw {
    /// `P(Y = k) ∝ k⁻ˢ` with `s > 2`, so that `E[Y]` is finite.
    Zeta { s: f64 },
    /// Explicit probabilities `P(Y = k)` for `k = 1, 2, …`.
    Pmf(Vec<f64>),
}

const BERNOULLI_2J: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// Hurwitz zeta `ζ(s, a) = Σ_{n≥0} (a + n)⁻ˢ` for `s > 1`, `a > 0` (Euler–Maclaurin).
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    let n = 12usize;
    let head: f64 = (0..n).map(|k| (a + k as f64).powf(-s)).sum();
    let x = a + n as f64;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s(s+1)…(s+2j-2) / (2j)!
    let mut coef = s;
    let mut fact = 2.0;
    let mut xpow = x.powf(-s - 1.0);
    for (j, b) in BERNOULLI_2J.iter().enumerate() {
        tail += b / fact * coef * xpow;
        let m = 2.0 * j as f64;
        coef *= (s + m + 1.0) * (s + m + 2.0);
        fact *= (m + 3.0) * (m + 4.0);
        xpow /= x * x;
    }
    head + tail
}

pub fn riemann_zeta(s: f64) -> f64 {
    hurwitz_zeta(s, 1.0)
}

impl TailLaw {
    pub fn validate(&self) -> Result<(), ChainError> {
        match self {
            TailLaw::Zeta { s } => {
                if !(*s > 2.0) {
                    return Err(ChainError::InvalidTail(format!(
                        "zeta exponent must exceed 2 for a finite mean, got {s}"
                    )));
                }
            }
            TailLaw::Pmf(p) => {
                if p.is_empty() || p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(ChainError::InvalidTail("probabilities must be finite and non-negative".into()));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(ChainError::InvalidTail(format!("probabilities sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// `P(Y ≥ k)`; equals 1 for `k ≤ 1`.
    pub fn tail(&self, k: u64) -> f64 {
        if k <= 1 {
            return 1.0;
        }
        match self {
            TailLaw::Zeta { s } => hurwitz_zeta(*s, k as f64) / riemann_zeta(*s),
            TailLaw::Pmf(p) => {
                let start = (k - 1) as usize;
                if start >= p.len() {
                    0.0
                } else {
                    p[start..].iter().sum()
                }
            }
        }
    }

    /// `P(Y = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        match self {
            TailLaw::Zeta { s } => (k as f64).powf(-s) / riemann_zeta(*s),
            TailLaw::Pmf(p) => p.get((k as usize).wrapping_sub(1)).copied().unwrap_or(0.0),
        }
    }

    /// `E[Y] = Σ_{z≥1} P(Y ≥ z)`.
    pub fn mean(&self) -> f64 {
        match self {
            TailLaw::Zeta { s } => riemann_zeta(s - 1.0) / riemann_zeta(*s),
            TailLaw::Pmf(p) => p.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum(),
        }
    }

    /// `Σ_{z>k} P(Y ≥ z)`.
    pub fn tail_sum_beyond(&self, k: u64) -> f64 {
        match self {
            TailLaw::Zeta { s } => {
                let a = (k + 1) as f64;
                let v = (hurwitz_zeta(s - 1.0, a) - k as f64 * hurwitz_zeta(*s, a)) / riemann_zeta(*s);
                v.max(0.0)
            }
            TailLaw::Pmf(p) => ((k + 1)..=(p.len() as u64)).map(|z| self.tail(z)).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_reference_values() {
        assert!((riemann_zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        assert!((riemann_zeta(3.0) - 1.202_056_903_159_594_3).abs() < 1e-14);
        assert!((hurwitz_zeta(3.0, 2.0) - (1.202_056_903_159_594_3 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn pmf_tail_consistency() {
        let law = TailLaw::Pmf(vec![0.5, 0.25, 0.25]);
        assert_eq!(law.tail(1), 1.0);
        assert!((law.tail(3) - 0.25).abs() < 1e-15);
        assert_eq!(law.tail(4), 0.0);
        assert!((law.mean() - 1.75).abs() < 1e-15);
    }

    #[test]
    fn zeta_tail_sum_matches_direct_sum() {
        let law = TailLaw::Zeta { s: 3.0 };
        let direct: f64 = (5u64..20000).map(|z| law.tail(z)).sum();
        let beyond = law.tail_sum_beyond(4) - law.tail_sum_beyond(19999);
        assert!((direct - beyond).abs() < 1e-10 * direct);
    }
}
