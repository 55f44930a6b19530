//! Seedable random-variate generation.
//!
//! The base generator is ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded through
//! `seed_from_u64`. Identical seeds give bit-identical sequences on every
//! platform for a given build. Streams for independent trials are keyed
//! from the run seed and the trial index; within a trial, purposes get
//! their own ChaCha stream through [`RngHandle::fork`]. None of this is
//! cryptographically hardened.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngHandle {
    // unstreamed generator that forks start from
    origin: ChaCha8Rng,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self::from_generator(ChaCha8Rng::seed_from_u64(seed))
    }

    fn from_generator(origin: ChaCha8Rng) -> Self {
        RngHandle {
            inner: origin.clone(),
            origin,
        }
    }

    /// Stream for trial `index` of a run seeded with `seed`. Its key is the
    /// first 32 bytes of stream `index` of the run's generator, so distinct
    /// (seed, index) pairs give unrelated streams.
    pub fn for_trial(seed: u64, index: u64) -> Self {
        let mut g = ChaCha8Rng::seed_from_u64(seed);
        g.set_stream(index);
        let mut key = [0u8; 32];
        g.fill_bytes(&mut key);
        Self::from_generator(ChaCha8Rng::from_seed(key))
    }

    /// Independent substream `stream` of the generator seeded with `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        Self::new(seed).fork(stream)
    }

    /// Stream `stream` of this handle's original key, from its start.
    /// Forking a fork starts again from that same key.
    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = self.origin.clone();
        inner.set_stream(stream);
        inner.set_word_pos(0);
        RngHandle {
            origin: self.origin.clone(),
            inner,
        }
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    mean + sd * standard_normal(rng)
}

/// Laplace(loc, scale): density (2b)^-1 exp(-|z - u| / b).
pub fn laplace<R: Rng + ?Sized>(loc: f64, scale: f64, rng: &mut R) -> Result<f64> {
    positive("laplace scale", scale)?;
    let e: f64 = Exp1.sample(rng);
    Ok(if rng.random::<bool>() {
        loc + scale * e
    } else {
        loc - scale * e
    })
}

/// Independent Laplace noise around each coordinate of `loc`.
pub fn laplace_vec<R: Rng + ?Sized>(loc: &[f64], scale: f64, rng: &mut R) -> Result<Vec<f64>> {
    loc.iter().map(|&u| laplace(u, scale, rng)).collect()
}

/// Inverse Gaussian (Wald) with the given mean and shape, by the
/// Michael–Schucany–Haas transformation.
pub fn inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> Result<f64> {
    positive("inverse gaussian mean", mean)?;
    positive("inverse gaussian shape", shape)?;
    let v = standard_normal(rng);
    let r = mean * v * v / (2.0 * shape);
    // smaller root of the quadratic, written without cancellation:
    // mean * (1 + r - sqrt(r^2 + 2r)) == mean / (1 + r + sqrt(r^2 + 2r))
    let x = mean / (1.0 + r + (r * (r + 2.0)).sqrt());
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        Ok(x)
    } else {
        Ok(mean * mean / x)
    }
}

pub fn exponential_rate<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    positive("exponential rate", rate)?;
    let e: f64 = Exp1.sample(rng);
    Ok(e / rate)
}

/// Gamma(shape, rate) via Marsaglia–Tsang (with the shape < 1 boost).
pub fn gamma_shape_rate<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    positive("gamma shape", shape)?;
    positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(g.sample(rng))
}

pub fn beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    positive("beta alpha", a)?;
    positive("beta beta", b)?;
    let d = Beta::new(a, b).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(d.sample(rng))
}

/// Dirichlet draw as normalized independent gammas.
pub fn dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alphas.len() < 2 {
        return Err(Error::InvalidArgument("dirichlet needs at least two categories".into()));
    }
    let mut g = alphas
        .iter()
        .map(|&a| gamma_shape_rate(a, 1.0, rng))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        // every gamma underflowed; only possible for tiny concentrations
        let k = g.len() as f64;
        g.iter_mut().for_each(|x| *x = 1.0 / k);
        return Ok(g);
    }
    g.iter_mut().for_each(|x| *x /= total);
    Ok(g)
}

pub fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("binomial p must lie in [0, 1], got {p}")));
    }
    let d = Binomial::new(n, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(d.sample(rng))
}

/// Index drawn with probability proportional to `probs`.
pub fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("categorical weights must be finite and nonnegative".into()));
    }
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("categorical weights sum to zero".into()));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // rounding in the running sum
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
}

/// Ridge added to the diagonal when a covariance fails to factor.
pub const COV_RIDGE: f64 = 1e-10;

/// Draw from N(mean, cov) through a Cholesky factor of `cov`.
pub fn mvnormal<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(Error::InvalidArgument(format!(
            "covariance is {}x{}, mean has length {d}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.iter().all(|&c| c == 0.0) {
        return Ok(mean.clone());
    }
    let factor = match cov.clone().cholesky() {
        Some(c) => c,
        None => {
            let ridged = cov + DMatrix::identity(d, d) * COV_RIDGE;
            ridged
                .cholesky()
                .ok_or_else(|| Error::Singular("covariance is not positive semidefinite".into()))?
        }
    };
    let z = DVector::from_fn(d, |_, _| standard_normal(rng));
    Ok(mean + factor.l() * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn equal_seeds_equal_sequences() {
        let mut a = RngHandle::new(17);
        let mut b = RngHandle::new(17);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = RngHandle::substream(17, 3);
        let mut d = RngHandle::new(17).fork(3);
        assert_eq!(c.next_u64(), d.next_u64());
        let mut e = RngHandle::for_trial(17, 2);
        let mut f = RngHandle::for_trial(17, 2);
        assert_eq!(e.next_u64(), f.next_u64());
    }

    #[test]
    fn trial_streams_differ_across_seeds() {
        // seed ^ index style derivation would make these two runs share trials
        let first: Vec<u64> = (0..64).map(|t| RngHandle::for_trial(1, t).next_u64()).collect();
        let mut second: Vec<u64> = (0..64).map(|t| RngHandle::for_trial(2, t).next_u64()).collect();
        second.sort_unstable();
        assert!(first.iter().all(|x| second.binary_search(x).is_err()));
    }

    #[test]
    fn substreams_are_uncorrelated() {
        let n = 100_000;
        let mut a = RngHandle::substream(5, 0);
        let mut b = RngHandle::substream(5, 1);
        let mut c = RngHandle::for_trial(5, 1);
        let xa: Vec<f64> = (0..n).map(|_| a.random()).collect();
        let xb: Vec<f64> = (0..n).map(|_| b.random()).collect();
        let xc: Vec<f64> = (0..n).map(|_| c.random()).collect();
        let corr = |x: &[f64], y: &[f64]| {
            let (mx, vx) = mean_var(x);
            let (my, vy) = mean_var(y);
            let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n as f64 - 1.0);
            cov / (vx * vy).sqrt()
        };
        assert!(corr(&xa, &xb).abs() < 0.01);
        assert!(corr(&xa, &xc).abs() < 0.01);
    }

    #[test]
    fn laplace_moments() {
        let mut rng = RngHandle::new(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| laplace(0.0, 1.0, &mut rng).unwrap()).collect();
        let (_, v) = mean_var(&xs);
        assert!((v - 2.0).abs() < 0.02, "variance {v}");

        let mut ys: Vec<f64> = (0..100_001).map(|_| laplace(5.0, 1.0, &mut rng).unwrap()).collect();
        ys.sort_by(f64::total_cmp);
        assert!((ys[50_000] - 5.0).abs() < 0.01);

        assert!(laplace(0.0, 0.0, &mut rng).is_err());
        assert!(laplace(0.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn inverse_gaussian_moments() {
        let mut rng = RngHandle::new(2);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| inverse_gaussian(2.0, 8.0, &mut rng).unwrap())
            .collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 2.0).abs() < 0.01, "mean {m}");
        assert!((v - 1.0).abs() < 0.02, "variance {v}");
        assert!(inverse_gaussian(0.0, 1.0, &mut rng).is_err());
        assert!(inverse_gaussian(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn inverse_gaussian_extreme_ratio_stays_positive() {
        // mean / shape huge: the textbook root formula cancels to zero here
        let mut rng = RngHandle::new(3);
        for _ in 0..10_000 {
            let x = inverse_gaussian(1e8, 1e-4, &mut rng).unwrap();
            assert!(x > 0.0 && x.is_finite());
        }
    }

    #[test]
    fn mvnormal_zero_cov_and_correlation() {
        let mut rng = RngHandle::new(4);
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(mvnormal(&mean, &zero, &mut rng).unwrap(), mean);

        let one = DMatrix::from_element(1, 1, 4.0);
        let m1 = DVector::from_element(1, 0.0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| mvnormal(&m1, &one, &mut rng).unwrap()[0]).collect();
        let (_, v) = mean_var(&xs);
        assert!((v / 4.0 - 1.0).abs() < 0.01);

        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
        let n = 200_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| mvnormal(&mean, &cov, &mut rng).unwrap()).collect();
        let a: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        let b: Vec<f64> = draws.iter().map(|d| d[1]).collect();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let c = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
        let rho = c / (va * vb).sqrt();
        assert!((rho - 0.8).abs() < 0.01, "rho {rho}");

        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(mvnormal(&mean, &bad, &mut rng).is_err());
    }

    #[test]
    fn standard_families() {
        let mut rng = RngHandle::new(5);
        let n = 200_000;
        let g: Vec<f64> = (0..n).map(|_| gamma_shape_rate(4.0, 6.5, &mut rng).unwrap()).collect();
        assert!((mean_var(&g).0 - 4.0 / 6.5).abs() < 0.005);

        let b: Vec<f64> = (0..n).map(|_| beta(2.0, 3.0, &mut rng).unwrap()).collect();
        assert!((mean_var(&b).0 - 0.4).abs() < 0.005);

        let k = binomial(10_000, 0.3, &mut rng).unwrap() as f64 / 10_000.0;
        assert!((k - 0.3).abs() < 0.01);

        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[categorical(&[0.2, 0.3, 0.5], &mut rng).unwrap()] += 1;
        }
        assert!((counts[2] as f64 / n as f64 - 0.5).abs() < 0.005);

        let mut acc = [0.0; 3];
        for _ in 0..n {
            let d = dirichlet(&[2.0, 1.0, 2.0], &mut rng).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            acc.iter_mut().zip(&d).for_each(|(a, x)| *a += x);
        }
        for (a, e) in acc.iter().zip([0.4, 0.2, 0.4]) {
            assert!((a / n as f64 - e).abs() < 0.01);
        }

        assert!(gamma_shape_rate(0.0, 1.0, &mut rng).is_err());
        assert!(beta(1.0, -1.0, &mut rng).is_err());
        assert!(binomial(10, 1.5, &mut rng).is_err());
        assert!(categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(dirichlet(&[1.0], &mut rng).is_err());
    }
}
