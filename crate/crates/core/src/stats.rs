//! Small statistical toolkit used by the verification experiments.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{invalid, Result};

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = kahan_sum(xs.iter().copied()) / n as f64;
        if n == 1 {
            return Self { mean, stderr: 0.0 };
        }
        let ss = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
        let var = ss / (n as f64 - 1.0);
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    /// `|mean - target| <= k * stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Unbiased sample variance together with an asymptotic standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    pub stderr: f64,
}

impl VarianceEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = kahan_sum(xs.iter().copied()) / n;
        let m2 = kahan_sum(xs.iter().map(|x| (x - mean).powi(2))) / n;
        let m4 = kahan_sum(xs.iter().map(|x| (x - mean).powi(4))) / n;
        let variance = m2 * n / (n - 1.0);
        // Var(s^2) ≈ (μ4 - σ^4) / n
        let stderr = ((m4 - m2 * m2).max(0.0) / n).sqrt();
        Self { variance, stderr }
    }
}

/// Compensated summation.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// One-sample Kolmogorov–Smirnov distance between the empirical law of
/// `samples` and the continuous CDF `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS distance at significance
/// `level`: `sqrt(-ln(level/2)/2) * sqrt((n+m)/(n m))`.
pub fn ks_two_sample_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// CDF of Beta(alpha, beta).
pub fn beta_cdf(alpha: f64, beta: f64) -> Result<impl Fn(f64) -> f64> {
    let d = Beta::new(alpha, beta).map_err(|e| invalid("beta", e.to_string()))?;
    Ok(move |x: f64| d.cdf(x.clamp(0.0, 1.0)))
}

/// Jackknife standard error from leave-one-group-out replicates.
pub fn jackknife_stderr(replicates: &[f64]) -> f64 {
    let g = replicates.len() as f64;
    let mean = replicates.iter().sum::<f64>() / g;
    let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
    ((g - 1.0) / g * ss).sqrt()
}
