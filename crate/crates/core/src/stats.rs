//! Small Monte Carlo summaries: plain and self-normalized weighted means,
//! effective sample size, Wilson bounds.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// `|mean − target| ≤ k·stderr + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

/// Sample mean and its standard error.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Estimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    }
}

/// Self-normalized estimate `Σ w x / Σ w` with the delta-method error.
pub fn weighted_mean(xs: &[f64], ws: &[f64]) -> Estimate {
    assert_eq!(xs.len(), ws.len());
    let total: f64 = ws.iter().sum();
    let n = xs.len();
    if !(total > 0.0) {
        return Estimate { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / total;
    let var: f64 = xs.iter().zip(ws).map(|(x, w)| (w * (x - mean)).powi(2)).sum();
    Estimate {
        mean,
        stderr: var.sqrt() / total,
        n,
    }
}

/// Kish effective sample size.
pub fn effective_sample_size(ws: &[f64]) -> f64 {
    let s: f64 = ws.iter().sum();
    let s2: f64 = ws.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Lower end of the Wilson score interval for a binomial proportion.
pub fn wilson_lower(successes: usize, n: usize, z: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_mean() {
        let e = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn weighted_reduces_to_plain() {
        let xs = [1.0, 5.0, 2.0];
        let e = weighted_mean(&xs, &[2.0, 2.0, 2.0]);
        assert!((e.mean - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(effective_sample_size(&[1.0, 1.0, 1.0, 1.0]), 4.0);
    }

    #[test]
    fn wilson_bounds() {
        assert_eq!(wilson_lower(0, 100, 1.96), 0.0);
        let lo = wilson_lower(50, 100, 1.96);
        assert!((lo - 0.4038).abs() < 1e-3);
        assert!(wilson_lower(1, 10_000, 3.0) > 0.0);
    }
}
