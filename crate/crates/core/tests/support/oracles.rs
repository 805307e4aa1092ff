//! Slow reference computations that share no code path with the library.

use lsa_lab::linalg::{Matrix, Vector};

/// Step data along one path; index `j` holds the quantities at `Z_j`, index 0 is unused.
pub struct PathData {
    pub alphas: Vec<f64>,
    pub abar: Vec<Matrix>,
    pub eps: Vec<Vector>,
}

impl PathData {
    fn n(&self) -> usize {
        self.alphas.len() - 1
    }

    fn tilde_a(&self, a: &Matrix, j: usize) -> Matrix {
        &self.abar[j] - a
    }
}

/// `Σ_{j=1}^n α_j P_{j+1:n} x_j`, with `P_{j+1:n} = Π_{l=j+1}^n (I − α_l M_l)` built from the right.
fn weighted_products(alphas: &[f64], factor: impl Fn(usize) -> Matrix, drive: impl Fn(usize) -> Vector, n: usize) -> Vector {
    let d = factor(1).nrows();
    let mut prod = Matrix::identity(d, d);
    let mut acc = Vector::zeros(d);
    for j in (1..=n).rev() {
        acc += &prod * drive(j) * alphas[j];
        prod = &prod * (Matrix::identity(d, d) - factor(j) * alphas[j]);
    }
    acc
}

/// `J0_j` for `j = 0..=n` from `J0_j = Σ_{i≤j} α_i G_{i+1:j} ε(Z_i)`.
pub fn j0_direct(a: &Matrix, path: &PathData) -> Vec<Vector> {
    (0..=path.n())
        .map(|j| weighted_products(&path.alphas, |_| a.clone(), |i| path.eps[i].clone(), j))
        .collect()
}

/// `J1_n = −Σ_{j=1}^n α_j G_{j+1:n} Ã(Z_j) J0_{j−1}`.
pub fn j1_direct(a: &Matrix, path: &PathData) -> Vector {
    let j0 = j0_direct(a, path);
    -weighted_products(&path.alphas, |_| a.clone(), |j| path.tilde_a(a, j) * &j0[j - 1], path.n())
}

/// `H0_n = −Σ_{j=1}^n α_j Γ_{j+1:n} Ã(Z_j) J0_{j−1}` with the random products `Γ`.
pub fn h0_direct(a: &Matrix, path: &PathData) -> Vector {
    let j0 = j0_direct(a, path);
    -weighted_products(&path.alphas, |l| path.abar[l].clone(), |j| path.tilde_a(a, j) * &j0[j - 1], path.n())
}

/// `Γ_{1:n} θ̃_0`.
pub fn transient_direct(path: &PathData, theta_tilde0: &Vector) -> Vector {
    let d = theta_tilde0.len();
    let mut v = theta_tilde0.clone();
    for l in 1..=path.n() {
        v = (Matrix::identity(d, d) - &path.abar[l] * path.alphas[l]) * v;
    }
    v
}

/// `E_{z0}[‖Γ_{1:n}‖^p]` by looping over all `Sⁿ` index sequences; the norm is the exact 2-norm from the SVD.
pub fn gamma_moment_by_sequences(kernel: &Matrix, mats: &[Matrix], alphas: &[f64], z0: usize, p: f64, n: usize) -> f64 {
    let s = kernel.nrows();
    let d = mats[0].nrows();
    let total = s.pow(n as u32);
    let mut sum = 0.0;
    for code in 0..total {
        let mut rem = code;
        let seq: Vec<usize> = (0..n)
            .map(|_| {
                let x = rem % s;
                rem /= s;
                x
            })
            .collect();
        let mut prob = 1.0;
        let mut prev = z0;
        let mut g = Matrix::identity(d, d);
        for (k, &z) in seq.iter().enumerate() {
            prob *= kernel[(prev, z)];
            g = (Matrix::identity(d, d) - &mats[z] * alphas[k + 1]) * g;
            prev = z;
        }
        if prob > 0.0 {
            let norm = g.clone().svd(false, false).singular_values.max();
            sum += prob * norm.powf(p);
        }
    }
    sum
}

/// `u_n = θ₀ E_1[Π_{k<n}(1 − α A_ε(Z_{k+1}))]` on the forward recurrence chain with return law `pmf` on `{1, …, K}`,
/// by recursion over every path.
pub fn counterexample_by_paths(pmf: &[f64], epsilon: f64, alpha: f64, theta0: f64, n: usize) -> f64 {
    fn go(pmf: &[f64], eps: f64, alpha: f64, z: usize, left: usize) -> f64 {
        if left == 0 {
            return 1.0;
        }
        let factor = |y: usize| if y == 1 { 1.0 - alpha } else { 1.0 + alpha * eps };
        if z > 1 {
            factor(z - 1) * go(pmf, eps, alpha, z - 1, left - 1)
        } else {
            (1..=pmf.len())
                .filter(|&y| pmf[y - 1] > 0.0)
                .map(|y| pmf[y - 1] * factor(y) * go(pmf, eps, alpha, y, left - 1))
                .sum()
        }
    }
    theta0 * go(pmf, epsilon, alpha, 1, n)
}

/// `ζ(3)/ζ(2)`, the stationary weight of state 1 under the cubic return law.
pub fn pi1_cubic() -> f64 {
    let zeta3 = 1.202_056_903_159_594_2;
    let zeta2 = std::f64::consts::PI * std::f64::consts::PI / 6.0;
    zeta3 / zeta2
}

/// Lyapunov solution for diagonal `A`: `Q = diag(1/(2a_i))`.
pub fn lyapunov_diagonal(diag: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_iterator(diag.len(), diag.iter().map(|a| 0.5 / a)))
}

/// Stationary law by power iteration from the uniform vector.
pub fn stationary_power(p: &Matrix, iters: usize) -> Vec<f64> {
    let n = p.nrows();
    let mut pi = Vector::from_element(n, 1.0 / n as f64);
    for _ in 0..iters {
        pi = p.tr_mul(&pi);
    }
    pi.iter().copied().collect()
}
