//! Oracles shared by the integration tests. Nothing here calls into the
//! code under test except the KS routine, which has its own reference-value
//! tests.
#![allow(dead_code)]

use privexp::evaluation::{ks_uniform, KsResult};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Mass, mean, and variance of Exp(rate) restricted to `[v, w]`, by quadrature.
pub fn truncated_exponential_quadrature(rate: f64, v: f64, w: f64) -> (f64, f64, f64) {
    let pdf = |x: f64| rate * (-rate * x).exp();
    let tol = 1e-14;
    let mass = simpson(&pdf, v, w, tol);
    let mean = simpson(&|x| x * pdf(x), v, w, tol) / mass;
    let second = simpson(&|x| x * x * pdf(x), v, w, tol) / mass;
    (mass, mean, second - mean * mean)
}

pub fn laplace_cdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / scale).exp()
    } else {
        1.0 - 0.5 * (-x / scale).exp()
    }
}

/// KS test of `draws` against a continuous CDF.
pub fn ks_against(draws: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let u: Vec<f64> = draws.iter().map(|&x| cdf(x).clamp(0.0, 1.0)).collect();
    ks_uniform(&u).expect("probabilities in [0, 1]")
}

/// A normalized 1-D density tabulated on a uniform grid, with its CDF.
pub struct GridDensity {
    pub lo: f64,
    pub step: f64,
    pub cdf: Vec<f64>,
}

impl GridDensity {
    /// Tabulates `exp(log_f)` on `points` nodes over `[lo, hi]` with the
    /// trapezoid rule.
    pub fn new(log_f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Self {
        let step = (hi - lo) / (points - 1) as f64;
        let logs: Vec<f64> = (0..points).map(|i| log_f(lo + i as f64 * step)).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dens: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let mut cdf = vec![0.0; points];
        for i in 1..points {
            cdf[i] = cdf[i - 1] + 0.5 * step * (dens[i - 1] + dens[i]);
        }
        let total = cdf[points - 1];
        cdf.iter_mut().for_each(|c| *c /= total);
        GridDensity { lo, step, cdf }
    }

    /// Piecewise-linear CDF.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.cdf.len() {
            return 1.0;
        }
        let frac = pos - i as f64;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Inverse of [`cdf_at`](Self::cdf_at) by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut a, mut b) = (self.lo, self.lo + self.step * (self.cdf.len() - 1) as f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.cdf_at(m) < p {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

/// Log density, up to a constant, of the noise variance given the residual
/// `r = y - s`: `N(r; 0, sigma2) * Exp(sigma2; eps^2 / (2 delta^2))`.
pub fn sigma2_log_target(sigma2: f64, r: f64, delta: f64, epsilon: f64) -> f64 {
    let rate = epsilon * epsilon / (2.0 * delta * delta);
    -0.5 * sigma2.ln() - r * r / (2.0 * sigma2) - rate * sigma2
}

/// Equal-probability bins of the target and the chi-square p-value of
/// `draws` against them.
pub fn sigma2_chi_square(draws: &[f64], r: f64, delta: f64, eps: f64, bins: usize) -> f64 {
    // work on log sigma2, where the target is smooth and bounded
    let dens = GridDensity::new(|u| sigma2_log_target(u.exp(), r, delta, eps) + u, -25.0, 15.0, 400_001);
    let edges: Vec<f64> = (1..bins).map(|i| dens.quantile(i as f64 / bins as f64)).collect();
    let mut counts = vec![0usize; bins];
    for &s2 in draws {
        let u = s2.ln();
        counts[edges.partition_point(|&e| e < u)] += 1;
    }
    let expected = draws.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

/// Mean and standard error from non-overlapping batch means.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Sample mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Largest |log(P(bin) / Q(bin))| over histogram bins on `[lo, hi]` where
/// both samples have at least `min_count` entries.
pub fn max_log_ratio(p: &[f64], q: &[f64], lo: f64, hi: f64, bins: usize, min_count: usize) -> f64 {
    let hist = |xs: &[f64]| {
        let mut h = vec![0usize; bins];
        let width = (hi - lo) / bins as f64;
        for &x in xs {
            if x >= lo && x < hi {
                h[((x - lo) / width) as usize] += 1;
            }
        }
        h
    };
    let (hp, hq) = (hist(p), hist(q));
    let (np, nq) = (p.len() as f64, q.len() as f64);
    hp.iter()
        .zip(&hq)
        .filter(|(&a, &b)| a >= min_count && b >= min_count)
        .map(|(&a, &b)| ((a as f64 / np) / (b as f64 / nq)).ln().abs())
        .fold(0.0, f64::max)
}
