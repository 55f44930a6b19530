//! Truncated exponential families.
//!
//! Conditioning a univariate family on `x in [v, w]` gives another
//! exponential family whose log-partition is `A(eta) + log(F(w) - F(v))`.
//! Its moments therefore differ from the untruncated ones by the gradient
//! and Hessian of the log interval mass, which [`trunc_moments`] obtains
//! with [`crate::autodiff`]. [`rs_clt`] turns those moments into the normal
//! approximation for a sum over a binomially distributed number of records
//! that fall inside the interval.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_hess, Real};
use crate::error::{Error, Result};
use crate::expfam::Family;

/// Intervals carrying less probability mass than this are rejected.
pub const MIN_MASS: f64 = 1e-12;

/// A closed interval `[v, w]` with possibly infinite ends.
///
/// Serialized as `[v, w]` with `null` standing for an infinite end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    v: f64,
    w: f64,
}

impl Interval {
    pub fn new(v: f64, w: f64) -> Result<Self> {
        if v.is_nan() || w.is_nan() || !(v < w) || v == f64::INFINITY || w == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("invalid interval [{v}, {w}]")));
        }
        Ok(Interval { v, w })
    }

    pub fn full() -> Self {
        Interval {
            v: f64::NEG_INFINITY,
            w: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.v
    }

    pub fn upper(&self) -> f64 {
        self.w
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.v <= x && x <= self.w
    }

    /// The part of the interval inside the family's support, if any.
    pub fn clip_to_support(&self, family: Family) -> Option<Interval> {
        let (lo, hi) = match family {
            Family::Exponential => (0.0, f64::INFINITY),
            Family::Bernoulli => (0.0, 1.0),
            Family::Multinomial { .. } => return None,
        };
        let v = self.v.max(lo);
        let w = self.w.min(hi);
        (v <= w).then_some(Interval { v, w })
    }
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let end = |x: f64| x.is_finite().then_some(x);
        [end(self.v), end(self.w)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [v, w] = <[Option<f64>; 2]>::deserialize(d)?;
        Interval::new(v.unwrap_or(f64::NEG_INFINITY), w.unwrap_or(f64::INFINITY)).map_err(serde::de::Error::custom)
    }
}

/// Normal approximation to a random-count sum: mean `m`, covariance `v`,
/// and the per-record inclusion probability `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RsCltParams {
    pub m: DVector<f64>,
    pub v: DMatrix<f64>,
    pub q: f64,
}

impl RsCltParams {
    /// Zero contribution, used for intervals with negligible mass.
    pub fn zero(dim: usize) -> Self {
        RsCltParams {
            m: DVector::zeros(dim),
            v: DMatrix::zeros(dim, dim),
            q: 0.0,
        }
    }
}

fn degenerate(iv: &Interval, mass: f64) -> Error {
    Error::DegenerateInterval {
        v: iv.v,
        w: iv.w,
        mass,
    }
}

/// log(F(w; eta) - F(v; eta)), evaluable on dual numbers.
pub fn log_interval_mass<T: Real>(family: Family, eta: &[T], iv: &Interval) -> Result<T> {
    let e = eta.first().ok_or_else(|| Error::Domain("empty natural parameter".into()))?;
    match family {
        Family::Exponential => {
            if !(e.value() < 0.0) {
                return Err(Error::Domain(format!("exponential natural parameter must be negative, got {}", e.value())));
            }
            let clipped = iv.clip_to_support(family).ok_or_else(|| degenerate(iv, 0.0))?;
            let (v, w) = (clipped.v, clipped.w);
            if w <= v {
                return Err(degenerate(iv, 0.0));
            }
            // mass = e^{eta v} - e^{eta w} = e^{eta v} (1 - e^{eta (w - v)})
            let head = e.clone() * v;
            if w == f64::INFINITY {
                Ok(head)
            } else {
                let tail = -(e.clone() * (w - v)).exp_m1();
                if !(tail.value() > 0.0) {
                    return Err(degenerate(iv, 0.0));
                }
                Ok(head + tail.try_ln()?)
            }
        }
        Family::Bernoulli => {
            let mass = family.cdf_natural(eta, iv.w)? - family.cdf_natural(eta, iv.v)?;
            if !(mass.value() > 0.0) {
                return Err(degenerate(iv, mass.value()));
            }
            mass.try_ln()
        }
        Family::Multinomial { .. } => Err(Error::Unsupported {
            family: family.name(),
            op: "truncation",
        }),
    }
}

/// q = F(w; theta) - F(v; theta).
pub fn interval_mass(family: Family, theta: &[f64], iv: &Interval) -> Result<f64> {
    let eta = family.natural_params(theta)?;
    match log_interval_mass(family, &eta, iv) {
        Ok(l) => Ok(l.exp()),
        Err(Error::DegenerateInterval { .. }) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Log-partition of the family truncated to `iv`.
pub fn trunc_log_partition<T: Real>(family: Family, eta: &[T], iv: &Interval) -> Result<T> {
    Ok(family.log_partition(eta)? + log_interval_mass(family, eta, iv)?)
}

/// Mean and covariance of t(x) under the truncated family.
pub fn trunc_moments(family: Family, theta: &[f64], iv: &Interval) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let eta = family.natural_params(theta)?;
    let (mu, sigma) = family.moments(theta)?;
    let (log_q, d_mu, d_sigma) = grad_hess(|e| log_interval_mass(family, e, iv), &eta)?;
    if log_q.exp() < MIN_MASS {
        return Err(degenerate(iv, log_q.exp()));
    }
    Ok((mu + d_mu, sigma + d_sigma))
}

/// Normal approximation for the sum of t(x) over the records of `n` that
/// land in `iv`.
///
/// With q the interval mass and (mu, Sigma) the truncated moments,
/// `m = n q mu` and `V = n q Sigma + n q (1 - q) mu mu^T`.
pub fn rs_clt(family: Family, theta: &[f64], iv: &Interval, n: f64) -> Result<RsCltParams> {
    if !(n >= 1.0) {
        return Err(Error::InvalidArgument(format!("record count must be at least 1, got {n}")));
    }
    let q = interval_mass(family, theta, iv)?;
    if q < MIN_MASS {
        return Err(degenerate(iv, q));
    }
    let (mu, sigma) = trunc_moments(family, theta, iv)?;
    let nq = n * q;
    let m = &mu * nq;
    let mut v = sigma * nq + (&mu * mu.transpose()) * (nq * (1.0 - q));
    // exact symmetry for downstream factorizations
    v = (&v + v.transpose()) * 0.5;
    Ok(RsCltParams { m, v, q })
}

/// Upper bound on the L1 sensitivity of the statistic summed over records
/// inside `[a, b]` (records outside contribute zero).
///
/// Per coordinate this is `max(max |t_j|, max t_j - min t_j)` over the
/// interval; shipped statistics are monotone so the extrema sit at the ends.
pub fn trunc_sensitivity(family: Family, iv: &Interval) -> Result<f64> {
    if !iv.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "truncation bounds must be finite, got [{}, {}]",
            iv.v, iv.w
        )));
    }
    let clipped = iv.clip_to_support(family).ok_or_else(|| match family {
        Family::Multinomial { .. } => Error::Unsupported {
            family: family.name(),
            op: "truncation",
        },
        _ => degenerate(iv, 0.0),
    })?;
    let (lo, hi) = match family {
        // t(x) = x
        Family::Exponential => (clipped.v, clipped.w),
        // t takes the values in {0, 1} that fall inside the interval
        Family::Bernoulli => {
            let vals: Vec<f64> = [0.0, 1.0].into_iter().filter(|x| clipped.contains(*x)).collect();
            match vals.as_slice() {
                [] => (0.0, 0.0),
                [x] => (*x, *x),
                _ => (0.0, 1.0),
            }
        }
        Family::Multinomial { .. } => unreachable!(),
    };
    Ok(lo.abs().max(hi.abs()).max(hi - lo))
}
