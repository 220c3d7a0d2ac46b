//! Small numeric helpers: logistic link, sample moments and a Gaussian
//! smoothing integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Point estimate with its standard error and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl EstimatorResult {
    /// Symmetric normal interval `mean ± z·se`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.se, self.mean + z * self.se)
    }
}

/// Sample mean and standard error of the mean (n - 1 denominator).
pub fn mean_se(xs: &[f64]) -> Result<EstimatorResult> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "standard error needs at least 2 samples, got {n}"
        )));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let var = ss / (n - 1) as f64;
    Ok(EstimatorResult {
        mean,
        se: (var / n as f64).sqrt(),
        n,
    })
}

/// Mean of the values, 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// `E[logistic(x + sd·Z)]` for standard normal `Z`, by composite Simpson
/// integration over ±10 standard deviations.
pub fn expected_logistic(x: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return logistic(x);
    }
    const INTERVALS: usize = 800;
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / INTERVALS as f64;
    let f = |z: f64| logistic(x + sd * z) * (-0.5 * z * z).exp();
    let mut acc = f(lo) + f(hi);
    for i in 1..INTERVALS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert_abs_diff_eq!(logistic(2.0), 0.880_797_077_977_882_3, epsilon = 1e-15);
        assert_abs_diff_eq!(logistic(-800.0), 0.0, epsilon = 1e-300);
        assert_abs_diff_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(softplus(50.0), 50.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_se_values() {
        let r = mean_se(&[50.0, 30.0]).unwrap();
        assert_eq!(r.mean, 40.0);
        assert_abs_diff_eq!(r.se, 10.0, epsilon = 1e-12);
        assert_eq!(mean_se(&[3.0, 3.0, 3.0]).unwrap().se, 0.0);
        assert!(mean_se(&[1.0]).is_err());
    }

    #[test]
    fn expected_logistic_symmetry_and_limit() {
        assert_abs_diff_eq!(expected_logistic(0.0, 1.3), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(expected_logistic(1.0, 1e-9), logistic(1.0), epsilon = 1e-9);
        // Shrinks toward one half relative to the unsmoothed value.
        assert!(expected_logistic(2.0, 1.0) < logistic(2.0));
    }

    #[test]
    fn quantile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_abs_diff_eq!(quantile(&xs, 0.5), 2.5, epsilon = 1e-12);
    }
}
