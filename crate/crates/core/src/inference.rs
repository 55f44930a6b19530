//! Posterior inference from a [`NoisyRelease`].
//!
//! The Laplace likelihood `y ~ Lap(s, delta / eps)` is written as a scale
//! mixture of normals, `y | s, sigma2 ~ N(s, sigma2)` with
//! `sigma2 ~ Exp(eps^2 / (2 delta^2))`, and the statistic itself is
//! approximated as normal given theta. Every conditional is then either a
//! conjugate update, a product of Gaussians, or an inverse Gaussian.
//!
//! [`gibbs_bounded`] handles families with bounded statistics;
//! [`gibbs_truncated`] handles univariate families released with
//! truncation bounds, splitting the statistic over the lower, center, and
//! upper intervals. [`naive_posterior`] is the baseline that treats the
//! noisy statistic as exact.
//!
//! Nothing in this module sees raw data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{ConjugatePrior, Family, HyperParams};
use crate::mechanisms::NoisyRelease;
use crate::rng;
use crate::truncation::{interval_mass, rs_clt, trunc_moments, Interval, RsCltParams, MIN_MASS};

/// Attempts per rejection-sampled statistic before keeping the old value.
pub const MAX_REJECT: usize = 1000;

/// Floor on `|y - s|` in the sigma2 update.
pub const RESIDUAL_FLOOR: f64 = 1e-10;

fn cholesky_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Product of two Gaussian densities, renormalized.
///
/// Returns `S3 = (S1^-1 + S2^-1)^-1` and `m3 = S3 (S1^-1 m1 + S2^-1 m2)`.
pub fn norm_product(
    mu1: &DVector<f64>,
    sigma1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    sigma2: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = mu1.len();
    if mu2.len() != d || sigma1.shape() != (d, d) || sigma2.shape() != (d, d) {
        return Err(Error::InvalidArgument("norm_product arguments disagree in dimension".into()));
    }
    let p1 = cholesky_inverse(sigma1, "first covariance")?;
    let p2 = cholesky_inverse(sigma2, "second covariance")?;
    let mut sigma3 = cholesky_inverse(&(&p1 + &p2), "combined precision")?;
    sigma3 = (&sigma3 + sigma3.transpose()) * 0.5;
    let mu3 = &sigma3 * (p1 * mu1 + p2 * mu2);
    Ok((mu3, sigma3))
}

/// Draws the noise-variance augmentation given the current residuals:
/// `1 / sigma2_j ~ IG(eps / (delta |y_j - s_j|), eps^2 / delta^2)`.
pub fn update_sigma2<R: Rng + ?Sized>(
    y: &[f64],
    s_center: &[f64],
    delta: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(delta > 0.0 && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sensitivity and epsilon must be positive, got {delta} and {epsilon}"
        )));
    }
    if y.len() != s_center.len() {
        return Err(Error::InvalidArgument("y and s differ in length".into()));
    }
    let shape = (epsilon / delta).powi(2);
    y.iter()
        .zip(s_center)
        .map(|(yj, sj)| {
            let resid = (yj - sj).abs().max(RESIDUAL_FLOOR);
            let t = rng::inverse_gaussian(epsilon / (delta * resid), shape, rng)?;
            Ok(1.0 / t)
        })
        .collect()
}

/// Everything a sweep updates.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub theta: Vec<f64>,
    /// Full statistic in free coordinates.
    pub s: Vec<f64>,
    /// One entry per released coordinate.
    pub sigma2: Vec<f64>,
    /// Sum over the records inside the truncation bounds; truncated
    /// sampler only.
    pub s_center: Option<f64>,
}

/// Rejection bookkeeping for the statistic draws.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub proposals: u64,
    pub rejections: u64,
    /// Draws where the attempt budget ran out and the old value was kept.
    pub exhausted: u64,
}

impl Diagnostics {
    pub fn rejection_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.rejections as f64 / self.proposals as f64
        }
    }

    pub fn merge(&mut self, other: &Diagnostics) {
        self.proposals += other.proposals;
        self.rejections += other.rejections;
        self.exhausted += other.exhausted;
    }
}

/// One line of chain output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub theta: Vec<f64>,
    pub s: Vec<f64>,
    pub sigma2: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub s_center: Option<f64>,
}

impl TraceRecord {
    fn from_state(iter: usize, state: &GibbsState) -> Self {
        TraceRecord {
            iter,
            theta: state.theta.clone(),
            s: state.s.clone(),
            sigma2: state.sigma2.clone(),
            s_center: state.s_center,
        }
    }
}

/// Which iterations keep a full [`TraceRecord`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Recording {
    /// Only theta samples.
    #[default]
    None,
    /// Post-burn-in iterations.
    Retained,
    /// Every iteration, burn-in included.
    All,
}

/// How the truncated sampler couples the center-interval statistic to the
/// full statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncatedScheme {
    /// Lower, center, and upper sums are independent normals given theta.
    /// After the theta update the center sum is redrawn from its normal
    /// approximation at the new theta, ignoring y, and sigma2 is updated
    /// against that draw.
    #[default]
    Independent,
    /// The center sum and the full statistic are jointly normal given
    /// theta, with the cross-covariance implied by the record count being
    /// fixed. Both are drawn together given y, and sigma2 is updated
    /// against the center sum from that joint draw.
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsSettings {
    pub iters: usize,
    pub burnin: usize,
    pub max_reject: usize,
    pub recording: Recording,
    pub scheme: TruncatedScheme,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        GibbsSettings {
            iters: 5000,
            burnin: 2000,
            max_reject: MAX_REJECT,
            recording: Recording::None,
            scheme: TruncatedScheme::Independent,
        }
    }
}

impl GibbsSettings {
    pub fn new(iters: usize, burnin: usize) -> Result<Self> {
        let s = GibbsSettings {
            iters,
            burnin,
            ..Default::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burnin {
            return Err(Error::InvalidArgument(format!(
                "iters ({}) must exceed burnin ({})",
                self.iters, self.burnin
            )));
        }
        if self.max_reject == 0 {
            return Err(Error::InvalidArgument("max_reject must be positive".into()));
        }
        Ok(())
    }
}

/// Output of a Gibbs run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Post-burn-in theta draws, `iters - burnin` of them.
    pub samples: Vec<Vec<f64>>,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Diagnostics,
}

impl Chain {
    /// The reported scalar parameter of every retained sample.
    pub fn scalar_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|t| t[0]).collect()
    }
}

/// A Gibbs kernel over [`GibbsState`].
pub trait Sampler {
    fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GibbsState>;
    fn step<R: Rng + ?Sized>(&self, state: &mut GibbsState, diag: &mut Diagnostics, rng: &mut R) -> Result<()>;
}

/// Runs `settings.iters` sweeps from `init` (or the sampler's own start).
pub fn run_chain<S: Sampler, R: Rng + ?Sized>(
    sampler: &S,
    settings: &GibbsSettings,
    init: Option<GibbsState>,
    rng: &mut R,
) -> Result<Chain> {
    settings.validate()?;
    let mut state = match init {
        Some(s) => s,
        None => sampler.init(rng)?,
    };
    let mut diagnostics = Diagnostics::default();
    let mut samples = Vec::with_capacity(settings.iters - settings.burnin);
    let mut trace = Vec::new();
    for iter in 0..settings.iters {
        sampler.step(&mut state, &mut diagnostics, rng)?;
        let retained = iter >= settings.burnin;
        if retained {
            samples.push(state.theta.clone());
        }
        match settings.recording {
            Recording::All => trace.push(TraceRecord::from_state(iter, &state)),
            Recording::Retained if retained => trace.push(TraceRecord::from_state(iter, &state)),
            _ => {}
        }
    }
    if diagnostics.exhausted > 0 {
        log::debug!("{} statistic draws kept their previous value", diagnostics.exhausted);
    }
    Ok(Chain {
        samples,
        trace,
        diagnostics,
    })
}

fn check_compatible(release: &NoisyRelease, prior: &HyperParams) -> Result<()> {
    release.validate()?;
    if release.family != prior.family() {
        return Err(Error::FamilyMismatch {
            release: release.family.name(),
            prior: prior.family().name(),
        });
    }
    Ok(())
}

/// Rejection-samples `N(mean, cov)` until `valid` holds; after `max_reject`
/// failures returns `None`.
fn draw_valid<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    valid: impl Fn(&[f64]) -> bool,
    max_reject: usize,
    diag: &mut Diagnostics,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    let d = mean.len();
    let factor = match cov.clone().cholesky() {
        Some(c) => c.l(),
        None => (cov + DMatrix::identity(d, d) * rng::COV_RIDGE)
            .cholesky()
            .ok_or_else(|| Error::Singular("statistic covariance is not positive definite".into()))?
            .l(),
    };
    for _ in 0..max_reject {
        diag.proposals += 1;
        let z = DVector::from_fn(d, |_, _| rng::standard_normal(rng));
        let x = mean + &factor * z;
        if valid(x.as_slice()) {
            return Ok(Some(x.as_slice().to_vec()));
        }
        diag.rejections += 1;
    }
    diag.exhausted += 1;
    Ok(None)
}

/// Gibbs sampler for families with bounded sufficient statistics.
///
/// Multinomial statistics live in the first `k - 1` coordinates; the
/// released `k`-th count enters as one more Gaussian observation of
/// `n - sum(s)`.
#[derive(Debug, Clone)]
pub struct BoundedSampler<'a> {
    release: &'a NoisyRelease,
    prior: &'a HyperParams,
    n: f64,
    max_reject: usize,
}

impl<'a> BoundedSampler<'a> {
    pub fn new(release: &'a NoisyRelease, prior: &'a HyperParams, max_reject: usize) -> Result<Self> {
        check_compatible(release, prior)?;
        if !release.family.has_bounded_stats() {
            return Err(Error::MustTruncate(release.family.name()));
        }
        Ok(BoundedSampler {
            release,
            prior,
            n: release.n as f64,
            max_reject,
        })
    }

    fn family(&self) -> Family {
        self.release.family
    }

    /// The released counts implied by a free-coordinate statistic.
    fn expand(&self, s: &[f64]) -> Vec<f64> {
        let mut full = s.to_vec();
        if let Family::Multinomial { .. } = self.family() {
            full.push(self.n - s.iter().sum::<f64>());
        }
        full
    }

    /// Gaussian pseudo-observation of the free statistic carried by y.
    fn observation(&self, sigma2: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d = self.family().stat_dim();
        let y = &self.release.y;
        match self.family() {
            Family::Multinomial { .. } => {
                // y_j ~ N(s_j, sigma2_j) for j < k and y_k ~ N(n - 1's, sigma2_k)
                let tail = 1.0 / sigma2[d];
                let mut prec = DMatrix::from_element(d, d, tail);
                let mut rhs = DVector::from_element(d, (self.n - y[d]) * tail);
                for j in 0..d {
                    prec[(j, j)] += 1.0 / sigma2[j];
                    rhs[j] += y[j] / sigma2[j];
                }
                let cov = cholesky_inverse(&prec, "observation precision")?;
                let mean = &cov * rhs;
                Ok((mean, cov))
            }
            _ => Ok((
                DVector::from_column_slice(&y[..d]),
                DMatrix::from_diagonal(&DVector::from_column_slice(&sigma2[..d])),
            )),
        }
    }

    pub fn update_theta<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        state.theta = self.prior.conjugate_update(&state.s, self.n)?.sample_param(rng)?;
        Ok(())
    }

    pub fn update_stats<R: Rng + ?Sized>(
        &self,
        state: &mut GibbsState,
        diag: &mut Diagnostics,
        rng: &mut R,
    ) -> Result<()> {
        let fam = self.family();
        let (mu, sigma) = fam.moments(&state.theta)?;
        let (obs_mean, obs_cov) = self.observation(&state.sigma2)?;
        let (mean, cov) = norm_product(&(mu * self.n), &(sigma * self.n), &obs_mean, &obs_cov)?;
        let n = self.n;
        if let Some(s) = draw_valid(&mean, &cov, |s| fam.valid_stats(s, n), self.max_reject, diag, rng)? {
            state.s = s;
        }
        Ok(())
    }

    pub fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let r = self.release;
        state.sigma2 = update_sigma2(&r.y, &self.expand(&state.s), r.delta_s, r.epsilon, rng)?;
        Ok(())
    }
}

impl Sampler for BoundedSampler<'_> {
    fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GibbsState> {
        let r = self.release;
        let d = self.family().stat_dim();
        let theta = self.prior.sample_param(rng)?;
        let s = self.family().clamp_stats(&r.y[..d], self.n);
        let sigma2 = vec![2.0 * (r.delta_s / r.epsilon).powi(2); r.y.len()];
        Ok(GibbsState {
            theta,
            s,
            sigma2,
            s_center: None,
        })
    }

    fn step<R: Rng + ?Sized>(&self, state: &mut GibbsState, diag: &mut Diagnostics, rng: &mut R) -> Result<()> {
        self.update_theta(state, rng)?;
        self.update_stats(state, diag, rng)?;
        self.update_sigma2(state, rng)
    }
}

/// Gibbs sampler for a univariate family released with truncation bounds.
#[derive(Debug, Clone)]
pub struct TruncatedSampler<'a> {
    release: &'a NoisyRelease,
    prior: &'a HyperParams,
    n: f64,
    lower: Interval,
    center: Interval,
    upper: Interval,
    max_reject: usize,
    scheme: TruncatedScheme,
}

impl<'a> TruncatedSampler<'a> {
    pub fn new(
        release: &'a NoisyRelease,
        prior: &'a HyperParams,
        max_reject: usize,
        scheme: TruncatedScheme,
    ) -> Result<Self> {
        check_compatible(release, prior)?;
        let fam = release.family;
        if !fam.is_univariate() {
            return Err(Error::Unsupported {
                family: fam.name(),
                op: "truncated inference",
            });
        }
        let bounds = release
            .bounds
            .ok_or_else(|| Error::InvalidArgument("truncated inference needs a release with bounds".into()))?;
        let (a, b) = (bounds.lower(), bounds.upper());
        Ok(TruncatedSampler {
            release,
            prior,
            n: release.n as f64,
            lower: Interval::new(f64::NEG_INFINITY, a)?,
            center: bounds,
            upper: Interval::new(b, f64::INFINITY)?,
            max_reject,
            scheme,
        })
    }

    fn clipped(&self, iv: &Interval, theta: &[f64]) -> Result<Option<Interval>> {
        let fam = self.release.family;
        Ok(match iv.clip_to_support(fam) {
            Some(c) if interval_mass(fam, theta, &c)? >= MIN_MASS => Some(c),
            _ => None,
        })
    }

    /// RS-CLT parameters, or a zero contribution when the interval holds
    /// (numerically) no mass.
    fn interval_params(&self, theta: &[f64], iv: &Interval) -> Result<RsCltParams> {
        match self.clipped(iv, theta)? {
            Some(c) => rs_clt(self.release.family, theta, &c, self.n),
            None => Ok(RsCltParams::zero(1)),
        }
    }

    /// Center-sum posterior given y and sigma2: NormProduct with the
    /// Gaussian pseudo-likelihood, or the prior when the interval is empty.
    fn center_given_y(&self, c: &RsCltParams, sigma2: f64) -> Result<(f64, f64)> {
        if c.q == 0.0 {
            return Ok((0.0, 0.0));
        }
        let y = DVector::from_element(1, self.release.y[0]);
        let (m, v) = norm_product(&c.m, &c.v, &y, &DMatrix::from_element(1, 1, sigma2))?;
        Ok((m[0], v[(0, 0)]))
    }

    fn update_theta<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        state.theta = self.prior.conjugate_update(&state.s, self.n)?.sample_param(rng)?;
        Ok(())
    }

    fn update_sigma2<R: Rng + ?Sized>(&self, state: &mut GibbsState, rng: &mut R) -> Result<()> {
        let r = self.release;
        let center = state.s_center.unwrap_or(0.0);
        state.sigma2 = update_sigma2(&r.y, &[center], r.delta_s, r.epsilon, rng)?;
        Ok(())
    }

    fn step_independent<R: Rng + ?Sized>(
        &self,
        state: &mut GibbsState,
        diag: &mut Diagnostics,
        rng: &mut R,
    ) -> Result<()> {
        let fam = self.release.family;
        let n = self.n;
        let lo = self.interval_params(&state.theta, &self.lower)?;
        let c = self.interval_params(&state.theta, &self.center)?;
        let up = self.interval_params(&state.theta, &self.upper)?;
        let (mc, vc) = self.center_given_y(&c, state.sigma2[0])?;
        let mean = DVector::from_element(1, lo.m[0] + mc + up.m[0]);
        let cov = DMatrix::from_element(1, 1, lo.v[(0, 0)] + vc + up.v[(0, 0)]);
        if let Some(s) = draw_valid(&mean, &cov, |s| fam.valid_stats(s, n), self.max_reject, diag, rng)? {
            state.s = s;
        }
        self.update_theta(state, rng)?;

        let c = self.interval_params(&state.theta, &self.center)?;
        if let Some(x) = draw_valid(&c.m, &c.v, |x| x[0] >= 0.0, self.max_reject, diag, rng)? {
            state.s_center = Some(x[0]);
        }
        self.update_sigma2(state, rng)
    }

    fn step_joint<R: Rng + ?Sized>(&self, state: &mut GibbsState, diag: &mut Diagnostics, rng: &mut R) -> Result<()> {
        let fam = self.release.family;
        let n = self.n;
        let theta = &state.theta;
        let (mu, var) = fam.moments(theta)?;
        let (ms, vs) = (n * mu[0], n * var[(0, 0)]);
        let c = self.interval_params(theta, &self.center)?;
        // Cov(s, s_c) = n (E[t^2 1_c] - E[t] E[t 1_c])
        let cross = match self.clipped(&self.center, theta)? {
            Some(iv) => {
                let (mu_c, var_c) = trunc_moments(fam, theta, &iv)?;
                n * c.q * (var_c[(0, 0)] + mu_c[0] * mu_c[0] - mu[0] * mu_c[0])
            }
            None => 0.0,
        };
        let beta = if c.q > 0.0 { cross / c.v[(0, 0)] } else { 0.0 };
        let resid_var = (vs - beta * cross).max(0.0);
        let (mc, vc) = self.center_given_y(&c, state.sigma2[0])?;

        let mut accepted = None;
        for _ in 0..self.max_reject {
            diag.proposals += 1;
            let sc = mc + vc.sqrt() * rng::standard_normal(rng);
            let s = ms + beta * (sc - c.m[0]) + resid_var.sqrt() * rng::standard_normal(rng);
            if sc >= 0.0 && fam.valid_stats(&[s], n) {
                accepted = Some((sc, s));
                break;
            }
            diag.rejections += 1;
        }
        match accepted {
            Some((sc, s)) => {
                state.s_center = Some(sc);
                state.s = vec![s];
            }
            None => diag.exhausted += 1,
        }
        self.update_theta(state, rng)?;
        self.update_sigma2(state, rng)
    }
}

impl Sampler for TruncatedSampler<'_> {
    fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GibbsState> {
        let r = self.release;
        let theta = self.prior.sample_param(rng)?;
        let center = r.y[0].max(0.0);
        let lower = self.interval_params(&theta, &self.lower)?.m[0];
        let upper = self.interval_params(&theta, &self.upper)?.m[0];
        Ok(GibbsState {
            theta,
            s: vec![lower + center + upper],
            sigma2: vec![2.0 * (r.delta_s / r.epsilon).powi(2)],
            s_center: Some(center),
        })
    }

    fn step<R: Rng + ?Sized>(&self, state: &mut GibbsState, diag: &mut Diagnostics, rng: &mut R) -> Result<()> {
        match self.scheme {
            TruncatedScheme::Independent => self.step_independent(state, diag, rng),
            TruncatedScheme::Joint => self.step_joint(state, diag, rng),
        }
    }
}

/// Algorithm for bounded statistics.
pub fn gibbs_bounded<R: Rng + ?Sized>(
    release: &NoisyRelease,
    prior: &HyperParams,
    settings: &GibbsSettings,
    rng: &mut R,
) -> Result<Chain> {
    let sampler = BoundedSampler::new(release, prior, settings.max_reject)?;
    run_chain(&sampler, settings, None, rng)
}

/// Algorithm for truncated statistics.
pub fn gibbs_truncated<R: Rng + ?Sized>(
    release: &NoisyRelease,
    prior: &HyperParams,
    settings: &GibbsSettings,
    rng: &mut R,
) -> Result<Chain> {
    let sampler = TruncatedSampler::new(release, prior, settings.max_reject, settings.scheme)?;
    run_chain(&sampler, settings, None, rng)
}

/// Picks the sampler matching the release: truncated when it carries bounds.
pub fn infer<R: Rng + ?Sized>(
    release: &NoisyRelease,
    prior: &HyperParams,
    settings: &GibbsSettings,
    rng: &mut R,
) -> Result<Chain> {
    if release.bounds.is_some() {
        gibbs_truncated(release, prior, settings, rng)
    } else {
        gibbs_bounded(release, prior, settings, rng)
    }
}

/// Conjugate posterior that treats the released statistic as exact after
/// projecting it onto the valid region.
///
/// For the multinomial family negative counts are set to zero and the
/// others left alone, giving `Dirichlet(alpha + max(y, 0))`.
pub fn naive_posterior(release: &NoisyRelease, prior: &HyperParams) -> Result<HyperParams> {
    check_compatible(release, prior)
        .or_else(|e| match e {
            // the naive baseline also runs on untruncated exponential statistics
            Error::MustTruncate(_) if release.family == prior.family() => Ok(()),
            other => Err(other),
        })?;
    let n = release.n as f64;
    match (release.family, prior.prior()) {
        (Family::Multinomial { .. }, ConjugatePrior::Dirichlet { alpha }) => {
            let alpha = alpha.iter().zip(&release.y).map(|(a, y)| a + y.max(0.0)).collect();
            HyperParams::new(release.family, ConjugatePrior::Dirichlet { alpha })
        }
        (fam, _) => prior.conjugate_update(&fam.clamp_stats(&release.y, n), n),
    }
}
