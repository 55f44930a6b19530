//! Release mechanisms: what leaves the data owner.
//!
//! [`release_bounded`] and [`release_truncated`] add Laplace noise to
//! (possibly truncated) sufficient statistics and return a
//! [`NoisyRelease`], the only artifact the inference side ever sees.
//! [`ops_release`] is the one-posterior-sampling baseline for the
//! Bernoulli model, which releases tempered posterior draws instead.
//!
//! Neighboring data sets keep `n` fixed and differ in one record.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::expfam::{ConjugatePrior, Dataset, Family, HyperParams};
use crate::rng;
use crate::truncation::{trunc_sensitivity, Interval};

/// A public Laplace release of sufficient statistics.
///
/// `y` holds `stat_dim` coordinates, except for the multinomial family
/// where all `k` category counts are released.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyRelease {
    #[serde(flatten)]
    pub family: Family,
    pub n: u64,
    pub epsilon: f64,
    pub delta_s: f64,
    pub bounds: Option<Interval>,
    pub y: Vec<f64>,
}

impl NoisyRelease {
    /// Length of `y` for a given family.
    pub fn release_dim(family: Family) -> usize {
        match family {
            Family::Multinomial { k } => k,
            _ => family.stat_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta_s > 0.0 && self.delta_s.is_finite()) {
            return Err(Error::Config(format!("delta_s must be positive and finite, got {}", self.delta_s)));
        }
        if self.n == 0 {
            return Err(Error::Config("release must cover at least one record".into()));
        }
        let want = Self::release_dim(self.family);
        if self.y.len() != want {
            return Err(Error::Config(format!("y has {} entries, expected {want}", self.y.len())));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("y contains non-finite values".into()));
        }
        match (self.family.has_bounded_stats(), &self.bounds) {
            (false, None) => Err(Error::MustTruncate(self.family.name())),
            (false, Some(b)) if !b.is_finite() => {
                Err(Error::Config("truncation bounds must be finite".into()))
            }
            (true, Some(_)) if !self.family.is_univariate() => {
                Err(Error::Config(format!("{} releases do not take bounds", self.family.name())))
            }
            _ => Ok(()),
        }
    }

    /// Laplace scale used for every coordinate.
    pub fn noise_scale(&self) -> f64 {
        self.delta_s / self.epsilon
    }
}

/// L1 sensitivity of the sufficient statistic for bounded families.
pub fn sensitivity_bounded(family: Family) -> Result<f64> {
    match family {
        Family::Bernoulli => Ok(1.0),
        // one record switching category moves two counts by one
        Family::Multinomial { .. } => Ok(2.0),
        Family::Exponential => Err(Error::MustTruncate(family.name())),
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive and finite, got {epsilon}")))
    }
}

/// Releases `s + Lap(delta / epsilon)` for a family with bounded statistics.
pub fn release_bounded<R: Rng + ?Sized>(
    family: Family,
    data: &Dataset,
    epsilon: f64,
    rng: &mut R,
) -> Result<NoisyRelease> {
    check_epsilon(epsilon)?;
    let delta_s = sensitivity_bounded(family)?;
    let mut stats = family.suff_stats(data)?;
    let n = data.len();
    if let Family::Multinomial { .. } = family {
        let last = n as f64 - stats.iter().sum::<f64>();
        stats.push(last);
    }
    let y = rng::laplace_vec(&stats, delta_s / epsilon, rng)?;
    Ok(NoisyRelease {
        family,
        n: n as u64,
        epsilon,
        delta_s,
        bounds: None,
        y,
    })
}

/// Sum of t(x) over the records inside `bounds`.
pub fn truncated_stats(family: Family, data: &Dataset, bounds: &Interval) -> Result<f64> {
    let xs: Vec<f64> = match data {
        Dataset::Continuous(xs) => xs.clone(),
        Dataset::Binary(xs) => xs.iter().map(|&x| f64::from(x)).collect(),
        Dataset::Categorical { .. } => {
            return Err(Error::Unsupported {
                family: family.name(),
                op: "truncated release",
            })
        }
    };
    let mut s = 0.0;
    for x in xs {
        let t = family.stat(x)?;
        if bounds.contains(x) {
            s += t;
        }
    }
    Ok(s)
}

/// Redacts records outside `bounds` and releases the noisy truncated sum.
pub fn release_truncated<R: Rng + ?Sized>(
    family: Family,
    data: &Dataset,
    epsilon: f64,
    bounds: Interval,
    rng: &mut R,
) -> Result<NoisyRelease> {
    check_epsilon(epsilon)?;
    let delta_s = trunc_sensitivity(family, &bounds)?;
    let s_hat = truncated_stats(family, data, &bounds)?;
    let y = rng::laplace_vec(&[s_hat], delta_s / epsilon, rng)?;
    Ok(NoisyRelease {
        family,
        n: data.len() as u64,
        epsilon,
        delta_s,
        bounds: Some(bounds),
        y,
    })
}

/// Settings of the one-posterior-sampling baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpsSettings {
    /// Number of released draws; the budget is split evenly across them.
    pub samples: usize,
    /// The parameter is restricted to `[a0, 1 - a0]`.
    pub a0: f64,
}

impl Default for OpsSettings {
    fn default() -> Self {
        OpsSettings { samples: 100, a0: 0.1 }
    }
}

/// Tempering exponent of one OPS draw: `eps_ops / (2 du)` with
/// `du = log((1 - a0) / a0)` the range of one record's log-likelihood.
pub fn ops_temperature(epsilon: f64, settings: &OpsSettings) -> f64 {
    let eps_ops = epsilon / settings.samples as f64;
    let du = ((1.0 - settings.a0) / settings.a0).ln();
    eps_ops / (2.0 * du)
}

/// Releases OPS draws for Bernoulli data: each is an exponential-mechanism
/// sample from `p(theta) p(x | theta)^gamma` on `[a0, 1 - a0]`, i.e. a
/// truncated `Beta(alpha + gamma s, beta + gamma (n - s))`.
pub fn ops_release<R: Rng + ?Sized>(
    data: &Dataset,
    epsilon: f64,
    settings: &OpsSettings,
    prior: &HyperParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if !(settings.a0 > 0.0 && settings.a0 < 0.5) {
        return Err(Error::InvalidArgument(format!("a0 must lie in (0, 0.5), got {}", settings.a0)));
    }
    if settings.samples == 0 {
        return Err(Error::InvalidArgument("OPS needs at least one sample".into()));
    }
    let ConjugatePrior::Beta { alpha, beta } = *prior.prior() else {
        return Err(Error::Unsupported {
            family: prior.family().name(),
            op: "OPS release",
        });
    };
    if prior.family() != Family::Bernoulli {
        return Err(Error::Unsupported {
            family: prior.family().name(),
            op: "OPS release",
        });
    }
    let s = Family::Bernoulli.suff_stats(data)?[0];
    let n = data.len() as f64;
    let gamma = ops_temperature(epsilon, settings);
    let (a, b) = (alpha + gamma * s, beta + gamma * (n - s));
    (0..settings.samples)
        .map(|_| truncated_beta(a, b, settings.a0, 1.0 - settings.a0, rng))
        .collect()
}

/// Inverse-CDF draw from Beta(a, b) restricted to `[lo, hi]`.
fn truncated_beta<R: Rng + ?Sized>(a: f64, b: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    // invert in whichever tail keeps the probabilities away from 1
    let upper_tail = beta_reg(a, b, lo) > 0.5;
    let tail = |x: f64| if upper_tail { beta_reg(b, a, 1.0 - x) } else { beta_reg(a, b, x) };
    let (t_lo, t_hi) = (tail(lo), tail(hi));
    let (p_min, p_max) = if upper_tail { (t_hi, t_lo) } else { (t_lo, t_hi) };
    if !(p_max > p_min) {
        // no representable mass inside: it all sits beyond the near end
        return Ok(if upper_tail { lo } else { hi });
    }
    let u = p_min + rng.random::<f64>() * (p_max - p_min);
    let (mut left, mut right) = (lo, hi);
    for _ in 0..64 {
        let mid = 0.5 * (left + right);
        // tail(mid) increases with mid for the lower tail, decreases otherwise
        if (tail(mid) < u) != upper_tail {
            left = mid;
        } else {
            right = mid;
        }
    }
    Ok(0.5 * (left + right))
}
