//! Small statistical helpers shared by the estimators.

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_900_4;
/// Number of contiguous batches used for standard errors.
pub const BATCHES: usize = 50;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Mean and batch-means standard error of `values` split into `batches`
/// contiguous, nearly equal groups (fewer when there are fewer values).
pub fn batch_mean_se(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(1);
    if b < 2 {
        return (mean, 0.0);
    }
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let lo = i * n / b;
            let hi = (i + 1) * n / b;
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mbar = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mbar).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn least_squares(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    LineFit { slope, intercept, r_squared }
}
