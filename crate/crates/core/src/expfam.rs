//! Exponential families with conjugate priors.
//!
//! Three models ship: Bernoulli with a beta prior, multinomial (one-hot
//! records over `k` categories) with a Dirichlet prior, and exponential with
//! a gamma prior. Parameters `theta` are always passed as slices:
//! `[p]` for Bernoulli, `[p_1, ..., p_k]` for multinomial and `[rate]` for
//! exponential.
//!
//! The multinomial sufficient statistic uses the `k - 1` free coordinates
//! (counts of the first `k - 1` categories) so that its covariance is full
//! rank; the last count is implied by `n`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_hess, Real};
use crate::error::{Error, Result};
use crate::rng;

/// Lower clamp applied to sampled parameters so natural parameters stay finite.
pub const PARAM_FLOOR: f64 = 1e-12;

/// Tolerance on the simplex constraint for multinomial parameters.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Multinomial { k: usize },
    Exponential,
}

/// A data set of `n` records from one family's support.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    /// Bernoulli outcomes in {0, 1}.
    Binary(Vec<u8>),
    /// Category labels in `0..k` (the index of the hot coordinate).
    Categorical { k: usize, labels: Vec<usize> },
    /// Real-valued records.
    Continuous(Vec<f64>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Binary(v) => v.len(),
            Dataset::Categorical { labels, .. } => labels.len(),
            Dataset::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Builds a categorical data set from one-hot rows.
    pub fn from_one_hot(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, |r| r.len());
        let labels = rows
            .iter()
            .map(|row| {
                let ones = row.iter().filter(|&&x| x == 1.0).count();
                let zeros = row.iter().filter(|&&x| x == 0.0).count();
                if row.len() != k || ones != 1 || ones + zeros != k {
                    return Err(Error::SupportViolation(format!("{row:?} is not a one-hot vector of length {k}")));
                }
                Ok(row.iter().position(|&x| x == 1.0).unwrap())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::Categorical { k, labels })
    }

    pub fn to_one_hot(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Dataset::Categorical { k, labels } => Some(
                labels
                    .iter()
                    .map(|&l| (0..*k).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Concatenation of two data sets of the same kind.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        match (self, other) {
            (Dataset::Binary(a), Dataset::Binary(b)) => Ok(Dataset::Binary([a.as_slice(), b].concat())),
            (Dataset::Continuous(a), Dataset::Continuous(b)) => {
                Ok(Dataset::Continuous([a.as_slice(), b].concat()))
            }
            (Dataset::Categorical { k, labels: a }, Dataset::Categorical { k: k2, labels: b }) if k == k2 => {
                Ok(Dataset::Categorical {
                    k: *k,
                    labels: [a.as_slice(), b].concat(),
                })
            }
            _ => Err(Error::InvalidArgument("cannot concatenate data sets of different kinds".into())),
        }
    }
}

impl Family {
    pub fn multinomial(k: usize) -> Result<Self> {
        let f = Family::Multinomial { k };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Family::Multinomial { k } if *k < 2 => {
                Err(Error::Config(format!("multinomial needs at least 2 categories, got {k}")))
            }
            Family::Multinomial { k } if *k - 1 > crate::autodiff::MAX_DIM => Err(Error::Config(format!(
                "multinomial supports at most {} categories, got {k}",
                crate::autodiff::MAX_DIM + 1
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Family::Bernoulli => "bernoulli".into(),
            Family::Multinomial { k } => format!("multinomial(k={k})"),
            Family::Exponential => "exponential".into(),
        }
    }

    /// Dimension of t(x).
    pub fn stat_dim(&self) -> usize {
        match self {
            Family::Multinomial { k } => k - 1,
            _ => 1,
        }
    }

    /// Length of the parameter slice.
    pub fn param_len(&self) -> usize {
        match self {
            Family::Multinomial { k } => *k,
            _ => 1,
        }
    }

    pub fn has_bounded_stats(&self) -> bool {
        !matches!(self, Family::Exponential)
    }

    pub fn is_univariate(&self) -> bool {
        !matches!(self, Family::Multinomial { .. })
    }

    /// Sufficient statistic of a single univariate record.
    pub fn stat(&self, x: f64) -> Result<f64> {
        match self {
            Family::Bernoulli if x == 0.0 || x == 1.0 => Ok(x),
            Family::Exponential if x > 0.0 && x.is_finite() => Ok(x),
            Family::Multinomial { .. } => Err(self.unsupported("scalar statistic")),
            _ => Err(Error::SupportViolation(format!("{x} is outside the support of {}", self.name()))),
        }
    }

    fn unsupported(&self, op: &'static str) -> Error {
        Error::Unsupported {
            family: self.name(),
            op,
        }
    }

    /// s = sum_i t(x_i).
    pub fn suff_stats(&self, data: &Dataset) -> Result<Vec<f64>> {
        match (self, data) {
            (Family::Bernoulli, Dataset::Binary(xs)) => {
                let mut s = 0.0;
                for &x in xs {
                    s += self.stat(f64::from(x))?;
                }
                Ok(vec![s])
            }
            (Family::Exponential, Dataset::Continuous(xs)) => {
                let mut s = 0.0;
                for &x in xs {
                    s += self.stat(x)?;
                }
                Ok(vec![s])
            }
            (Family::Multinomial { k }, Dataset::Categorical { k: dk, labels }) if k == dk => {
                let mut s = vec![0.0; k - 1];
                for &l in labels {
                    if l >= *k {
                        return Err(Error::SupportViolation(format!("category {l} outside 0..{k}")));
                    }
                    if l < k - 1 {
                        s[l] += 1.0;
                    }
                }
                Ok(s)
            }
            _ => Err(Error::SupportViolation(format!("data set does not match family {}", self.name()))),
        }
    }

    /// Checks that `theta` lies in the open parameter domain.
    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len() {
            return Err(Error::Domain(format!(
                "{} expects {} parameters, got {}",
                self.name(),
                self.param_len(),
                theta.len()
            )));
        }
        let ok = match self {
            Family::Bernoulli => theta[0] > 0.0 && theta[0] < 1.0,
            Family::Exponential => theta[0] > 0.0 && theta[0].is_finite(),
            Family::Multinomial { .. } => {
                theta.iter().all(|&p| p > 0.0 && p < 1.0)
                    && (theta.iter().sum::<f64>() - 1.0).abs() < SIMPLEX_TOL
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{theta:?} outside the parameter domain of {}", self.name())))
        }
    }

    /// Moves a sampled parameter off the domain boundary.
    pub fn clamp_theta(&self, theta: &mut [f64]) {
        match self {
            Family::Bernoulli => theta[0] = theta[0].clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR),
            Family::Exponential => theta[0] = theta[0].max(PARAM_FLOOR),
            Family::Multinomial { .. } => {
                theta.iter_mut().for_each(|p| *p = p.max(PARAM_FLOOR));
                let total: f64 = theta.iter().sum();
                theta.iter_mut().for_each(|p| *p /= total);
            }
        }
    }

    /// eta(theta).
    pub fn natural_params(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(match self {
            Family::Bernoulli => vec![(theta[0] / (1.0 - theta[0])).ln()],
            Family::Exponential => vec![-theta[0]],
            Family::Multinomial { k } => {
                let last = theta[k - 1];
                theta[..k - 1].iter().map(|p| (p / last).ln()).collect()
            }
        })
    }

    /// Inverse of [`Family::natural_params`].
    pub fn theta_from_natural(&self, eta: &[f64]) -> Result<Vec<f64>> {
        self.log_partition(eta)?;
        Ok(match self {
            Family::Bernoulli => vec![1.0 / (1.0 + (-eta[0]).exp())],
            Family::Exponential => vec![-eta[0]],
            Family::Multinomial { .. } => {
                let m = eta.iter().cloned().fold(0.0, f64::max);
                let mut p: Vec<f64> = eta.iter().map(|e| (e - m).exp()).collect();
                p.push((-m).exp());
                let z: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= z);
                p
            }
        })
    }

    /// A(eta), evaluable on plain floats and on dual numbers.
    pub fn log_partition<T: Real>(&self, eta: &[T]) -> Result<T> {
        if eta.len() != self.stat_dim() {
            return Err(Error::Domain(format!(
                "{} expects natural parameters of length {}, got {}",
                self.name(),
                self.stat_dim(),
                eta.len()
            )));
        }
        match self {
            // log(1 + e^eta), shifted for large eta
            Family::Bernoulli => {
                let e = &eta[0];
                if e.value() > 0.0 {
                    Ok(e.clone() + (-e.clone()).exp().try_ln_1p()?)
                } else {
                    e.exp().try_ln_1p()
                }
            }
            Family::Exponential => {
                let e = &eta[0];
                if !(e.value() < 0.0) {
                    return Err(Error::Domain(format!("exponential natural parameter must be negative, got {}", e.value())));
                }
                Ok(-(-e.clone()).try_ln()?)
            }
            // log(1 + sum_j e^eta_j) with a max shift
            Family::Multinomial { .. } => {
                let m = eta.iter().map(|e| e.value()).fold(0.0, f64::max);
                let mut acc = eta[0].constant_like((-m).exp());
                for e in eta {
                    acc = acc + (e.clone() - m).exp();
                }
                Ok(acc.try_ln()? + m)
            }
        }
    }

    /// Mean and covariance of t(x), differentiated out of A(eta).
    pub fn moments(&self, theta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let eta = self.natural_params(theta)?;
        let (_, mu, sigma) = grad_hess(|e| self.log_partition(e), &eta)?;
        Ok((mu, sigma))
    }

    /// F(x; eta) for univariate families, evaluable on dual numbers.
    pub fn cdf_natural<T: Real>(&self, eta: &[T], x: f64) -> Result<T> {
        let e = eta.first().ok_or_else(|| Error::Domain("empty natural parameter".into()))?;
        match self {
            Family::Bernoulli => {
                if x < 0.0 {
                    Ok(e.constant_like(0.0))
                } else if x < 1.0 {
                    // 1 - p = 1 / (1 + e^eta)
                    Ok((e.exp() + 1.0).try_powf(-1.0)?)
                } else {
                    Ok(e.constant_like(1.0))
                }
            }
            Family::Exponential => {
                if !(e.value() < 0.0) {
                    return Err(Error::Domain(format!("exponential natural parameter must be negative, got {}", e.value())));
                }
                if x <= 0.0 {
                    Ok(e.constant_like(0.0))
                } else if x == f64::INFINITY {
                    Ok(e.constant_like(1.0))
                } else {
                    Ok(-(e.clone() * x).exp_m1())
                }
            }
            Family::Multinomial { .. } => Err(self.unsupported("cdf")),
        }
    }

    /// F(x; theta).
    pub fn cdf(&self, theta: &[f64], x: f64) -> Result<f64> {
        if !self.is_univariate() {
            return Err(self.unsupported("cdf"));
        }
        let eta = self.natural_params(theta)?;
        self.cdf_natural(&eta, x)
    }

    /// Inverse CDF of a continuous univariate family.
    pub fn quantile(&self, theta: &[f64], p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
        }
        match self {
            Family::Exponential => {
                self.check_theta(theta)?;
                Ok(-(-p).ln_1p() / theta[0])
            }
            _ => Err(self.unsupported("quantile")),
        }
    }

    /// Draws `n` iid records from p(x | theta).
    pub fn sample_data<R: Rng + ?Sized>(&self, theta: &[f64], n: usize, rng: &mut R) -> Result<Dataset> {
        self.check_theta(theta)?;
        Ok(match self {
            Family::Bernoulli => {
                let p = theta[0];
                Dataset::Binary((0..n).map(|_| u8::from(rng.random::<f64>() < p)).collect())
            }
            Family::Exponential => Dataset::Continuous(
                (0..n)
                    .map(|_| rng::exponential_rate(theta[0], rng))
                    .collect::<Result<_>>()?,
            ),
            Family::Multinomial { k } => Dataset::Categorical {
                k: *k,
                labels: (0..n).map(|_| rng::categorical(theta, rng)).collect::<Result<_>>()?,
            },
        })
    }

    /// Whether `s` could be the sufficient statistic of `n` records.
    pub fn valid_stats(&self, s: &[f64], n: f64) -> bool {
        if s.len() != self.stat_dim() || s.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match self {
            Family::Bernoulli => s[0] >= 0.0 && s[0] <= n,
            Family::Multinomial { .. } => s.iter().all(|&x| x >= 0.0) && s.iter().sum::<f64>() <= n,
            Family::Exponential => s[0] > 0.0,
        }
    }

    /// Projects `s` onto the closed valid region for `n` records.
    pub fn clamp_stats(&self, s: &[f64], n: f64) -> Vec<f64> {
        match self {
            Family::Bernoulli => vec![s[0].clamp(0.0, n)],
            Family::Exponential => vec![s[0].max(0.0)],
            Family::Multinomial { .. } => {
                let mut out: Vec<f64> = s.iter().map(|x| x.max(0.0)).collect();
                let total: f64 = out.iter().sum();
                if total > n {
                    out.iter_mut().for_each(|x| *x *= n / total);
                }
                out
            }
        }
    }

    /// The scalar reported in calibration and utility experiments:
    /// the success probability, the first category's probability, or the rate.
    pub fn scalar_param(&self, theta: &[f64]) -> f64 {
        theta[0]
    }
}

/// A conjugate prior in its classical parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConjugatePrior {
    Beta { alpha: f64, beta: f64 },
    Dirichlet { alpha: Vec<f64> },
    Gamma { shape: f64, rate: f64 },
}

/// Conjugate-prior hyperparameters.
///
/// Holds the natural pair `(lambda1, lambda2)` together with the classical
/// parameters they induce:
///
/// | family      | lambda1          | lambda2      | classical                               |
/// |-------------|------------------|--------------|-----------------------------------------|
/// | Bernoulli   | alpha            | alpha + beta | Beta(lambda1, lambda2 - lambda1)         |
/// | multinomial | alpha_1..alpha_{k-1} | sum alpha | Dirichlet(lambda1, lambda2 - sum lambda1) |
/// | exponential | rate             | shape - 1    | Gamma(lambda2 + 1, lambda1)             |
///
/// The update `lambda1 + s`, `lambda2 + n` then reproduces the textbook
/// posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    family: Family,
    lambda1: Vec<f64>,
    lambda2: f64,
    prior: ConjugatePrior,
}

impl HyperParams {
    pub fn new(family: Family, prior: ConjugatePrior) -> Result<Self> {
        let (lambda1, lambda2) = match (&family, &prior) {
            (Family::Bernoulli, ConjugatePrior::Beta { alpha, beta }) => (vec![*alpha], alpha + beta),
            (Family::Multinomial { k }, ConjugatePrior::Dirichlet { alpha }) if alpha.len() == *k => {
                (alpha[..k - 1].to_vec(), alpha.iter().sum())
            }
            (Family::Exponential, ConjugatePrior::Gamma { shape, rate }) => (vec![*rate], shape - 1.0),
            _ => {
                return Err(Error::InvalidHyperParams(format!(
                    "{prior:?} is not a conjugate prior for {}",
                    family.name()
                )))
            }
        };
        Self::from_natural(family, lambda1, lambda2).map_err(|e| match e {
            Error::InvalidStats(m) => Error::InvalidHyperParams(m),
            other => other,
        })
    }

    pub fn from_natural(family: Family, lambda1: Vec<f64>, lambda2: f64) -> Result<Self> {
        if lambda1.len() != family.stat_dim() {
            return Err(Error::InvalidHyperParams(format!(
                "lambda1 has length {}, {} needs {}",
                lambda1.len(),
                family.name(),
                family.stat_dim()
            )));
        }
        let prior = match family {
            Family::Bernoulli => ConjugatePrior::Beta {
                alpha: lambda1[0],
                beta: lambda2 - lambda1[0],
            },
            Family::Multinomial { .. } => {
                let mut alpha = lambda1.clone();
                alpha.push(lambda2 - lambda1.iter().sum::<f64>());
                ConjugatePrior::Dirichlet { alpha }
            }
            Family::Exponential => ConjugatePrior::Gamma {
                shape: lambda2 + 1.0,
                rate: lambda1[0],
            },
        };
        let positive = match &prior {
            ConjugatePrior::Beta { alpha, beta } => *alpha > 0.0 && *beta > 0.0,
            ConjugatePrior::Dirichlet { alpha } => alpha.iter().all(|&a| a > 0.0),
            ConjugatePrior::Gamma { shape, rate } => *shape > 0.0 && *rate > 0.0,
        };
        let finite = lambda1.iter().all(|x| x.is_finite()) && lambda2.is_finite();
        if !positive || !finite {
            return Err(Error::InvalidStats(format!("induced prior {prior:?} has nonpositive parameters")));
        }
        Ok(HyperParams {
            family,
            lambda1,
            lambda2,
            prior,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn lambda1(&self) -> &[f64] {
        &self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn prior(&self) -> &ConjugatePrior {
        &self.prior
    }

    /// lambda1' = lambda1 + s, lambda2' = lambda2 + n.
    pub fn conjugate_update(&self, s: &[f64], n: f64) -> Result<HyperParams> {
        if s.len() != self.lambda1.len() {
            return Err(Error::InvalidStats(format!(
                "statistic has length {}, expected {}",
                s.len(),
                self.lambda1.len()
            )));
        }
        let lambda1 = self.lambda1.iter().zip(s).map(|(l, x)| l + x).collect();
        Self::from_natural(self.family, lambda1, self.lambda2 + n)
    }

    /// One draw of theta from the distribution these hyperparameters describe.
    pub fn sample_param<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut theta = match &self.prior {
            ConjugatePrior::Beta { alpha, beta } => vec![rng::beta(*alpha, *beta, rng)?],
            ConjugatePrior::Dirichlet { alpha } => rng::dirichlet(alpha, rng)?,
            ConjugatePrior::Gamma { shape, rate } => vec![rng::gamma_shape_rate(*shape, *rate, rng)?],
        };
        self.family.clamp_theta(&mut theta);
        Ok(theta)
    }

    /// Posterior mean of the reported scalar parameter.
    pub fn scalar_mean(&self) -> f64 {
        match &self.prior {
            ConjugatePrior::Beta { alpha, beta } => alpha / (alpha + beta),
            ConjugatePrior::Dirichlet { alpha } => alpha[0] / alpha.iter().sum::<f64>(),
            ConjugatePrior::Gamma { shape, rate } => shape / rate,
        }
    }

    /// Standard deviation of the reported scalar parameter.
    pub fn scalar_sd(&self) -> f64 {
        match &self.prior {
            ConjugatePrior::Beta { alpha, beta } => {
                let t = alpha + beta;
                (alpha * beta / (t * t * (t + 1.0))).sqrt()
            }
            ConjugatePrior::Dirichlet { alpha } => {
                let t: f64 = alpha.iter().sum();
                let a = alpha[0];
                (a * (t - a) / (t * t * (t + 1.0))).sqrt()
            }
            ConjugatePrior::Gamma { shape, rate } => shape.sqrt() / rate,
        }
    }
}
