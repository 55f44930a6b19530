//! Calibration and utility statistics.

use crate::error::{Error, Result};

/// Mid-rank quantile of `theta` within `samples`:
/// `(#{x < theta} + #{x == theta} / 2 + 1/2) / (T + 1)`.
///
/// The half-count offset keeps the result strictly inside (0, 1).
pub fn empirical_quantile(theta: f64, samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "quantile needs at least two samples, got {}",
            samples.len()
        )));
    }
    let (mut below, mut tied) = (0usize, 0usize);
    for &x in samples {
        if x < theta {
            below += 1;
        } else if x == theta {
            tied += 1;
        }
    }
    Ok((below as f64 + 0.5 * tied as f64 + 0.5) / (samples.len() as f64 + 1.0))
}

/// One-sample Kolmogorov-Smirnov test against U(0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

pub fn ks_uniform(u: &[f64]) -> Result<KsResult> {
    if u.is_empty() {
        return Err(Error::InvalidArgument("KS test on an empty sample".into()));
    }
    if let Some(bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidArgument(format!("value {bad} lies outside [0, 1]")));
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let i = i as f64;
            ((i + 1.0) / m - x).max(x - i / m)
        })
        .fold(0.0, f64::max);
    Ok(KsResult { d, p: ks_pvalue(d, sorted.len()) })
}

/// Asymptotic p-value of the KS statistic `d` from `m` points, with the
/// usual small-sample correction `(sqrt(m) + 0.12 + 0.11 / sqrt(m)) d`.
pub fn ks_pvalue(d: f64, m: usize) -> f64 {
    let rm = (m as f64).sqrt();
    kolmogorov_survival((rm + 0.12 + 0.11 / rm) * d)
}

/// P(K > x) for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // theta-function form converges fast for small x
        let t = -PI * PI / (8.0 * x * x);
        let sum: f64 = (1..=8).map(|k| ((2 * k - 1) as f64).powi(2) * t).map(f64::exp).sum();
        (1.0 - (2.0 * PI).sqrt() / x * sum).clamp(0.0, 1.0)
    } else {
        let t = -2.0 * x * x;
        let sum: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (t * (k * k) as f64).exp()
            })
            .sum();
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Gaussian kernel with unit bandwidth.
fn kernel(a: f64, b: f64) -> f64 {
    (-(a - b) * (a - b) / 2.0).exp()
}

/// Unbiased estimate of the squared MMD between equally sized samples.
pub fn mmd2_unbiased(p: &[f64], q: &[f64]) -> Result<f64> {
    let m = p.len();
    if m != q.len() {
        return Err(Error::InvalidArgument(format!("MMD samples differ in size: {m} vs {}", q.len())));
    }
    if m < 2 {
        return Err(Error::InvalidArgument("MMD needs at least two samples per side".into()));
    }
    // separate sums keep the estimate exactly symmetric in (p, q)
    let (mut within_p, mut within_q, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                within_p += kernel(p[i], p[j]);
                within_q += kernel(q[i], q[j]);
                cross += kernel(p[i], q[j]) + kernel(p[j], q[i]);
            }
        }
    }
    Ok((within_p + within_q - cross) / (m * (m - 1)) as f64)
}

/// Mean and sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Median of a sample (average of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}
