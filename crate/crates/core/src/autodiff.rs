//! Forward-mode second-order automatic differentiation.
//!
//! [`Dual2`] carries a value together with its gradient and dense Hessian
//! with respect to a small vector of seed variables. Arithmetic propagates
//! both orders through the chain rule, so any expression built from the
//! [`Real`] operations yields exact derivatives up to rounding.
//!
//! Code that should run on both plain floats and dual numbers is written
//! once against [`Real`]; the log-partition functions and CDFs of the
//! exponential families are the main users.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Upper bound on the number of seed variables.
pub const MAX_DIM: usize = 8;

/// Scalar operations shared by `f64` and [`Dual2`].
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(&self) -> f64;
    /// A constant with the same shape as `self`.
    fn constant_like(&self, c: f64) -> Self;
    fn exp(&self) -> Self;
    fn exp_m1(&self) -> Self;
    fn try_ln(&self) -> Result<Self>;
    fn try_ln_1p(&self) -> Result<Self>;
    fn try_powf(&self, p: f64) -> Result<Self>;
}

fn ln_domain(x: f64, what: &str) -> Error {
    Error::Domain(format!("{what} of nonpositive value {x}"))
}

impl Real for f64 {
    fn value(&self) -> f64 {
        *self
    }

    fn constant_like(&self, c: f64) -> Self {
        c
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn exp_m1(&self) -> Self {
        f64::exp_m1(*self)
    }

    fn try_ln(&self) -> Result<Self> {
        if *self > 0.0 {
            Ok(self.ln())
        } else {
            Err(ln_domain(*self, "log"))
        }
    }

    fn try_ln_1p(&self) -> Result<Self> {
        if *self > -1.0 {
            Ok(self.ln_1p())
        } else {
            Err(ln_domain(1.0 + *self, "log"))
        }
    }

    fn try_powf(&self, p: f64) -> Result<Self> {
        if *self > 0.0 || (p.fract() == 0.0 && p >= 0.0) {
            Ok(self.powf(p))
        } else {
            Err(ln_domain(*self, "non-integer power"))
        }
    }
}

/// Value, gradient and Hessian of a scalar with respect to `dim()` seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    value: f64,
    grad: Vec<f64>,
    // row-major dim x dim, symmetric
    hess: Vec<f64>,
}

impl Dual2 {
    pub fn constant(value: f64, dim: usize) -> Self {
        Dual2 {
            value,
            grad: vec![0.0; dim],
            hess: vec![0.0; dim * dim],
        }
    }

    /// Seed variable `index` of `dim`.
    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut d = Self::constant(value, dim);
        d.grad[index] = 1.0;
        d
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.dim() + j]
    }

    pub fn grad_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.grad)
    }

    pub fn hess_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.hess)
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.value`.
    fn chain(&self, f: f64, df: f64, d2f: f64) -> Self {
        let d = self.dim();
        let grad: Vec<f64> = self.grad.iter().map(|g| df * g).collect();
        let mut hess = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                hess[i * d + j] = df * self.hess[i * d + j] + d2f * (self.grad[i] * self.grad[j]);
            }
        }
        Dual2 {
            value: f,
            grad,
            hess,
        }
    }

    pub fn recip(&self) -> Self {
        let x = self.value;
        self.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }

    fn check_dim(&self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "dual numbers of mismatched dimension");
    }
}

impl Real for Dual2 {
    fn value(&self) -> f64 {
        self.value
    }

    fn constant_like(&self, c: f64) -> Self {
        Dual2::constant(c, self.dim())
    }

    fn exp(&self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    fn exp_m1(&self) -> Self {
        let e = self.value.exp();
        self.chain(self.value.exp_m1(), e, e)
    }

    fn try_ln(&self) -> Result<Self> {
        let x = self.value;
        if x > 0.0 {
            Ok(self.chain(x.ln(), 1.0 / x, -1.0 / (x * x)))
        } else {
            Err(ln_domain(x, "log"))
        }
    }

    fn try_ln_1p(&self) -> Result<Self> {
        let x = self.value;
        if x > -1.0 {
            let u = 1.0 + x;
            Ok(self.chain(x.ln_1p(), 1.0 / u, -1.0 / (u * u)))
        } else {
            Err(ln_domain(1.0 + x, "log"))
        }
    }

    fn try_powf(&self, p: f64) -> Result<Self> {
        let x = self.value;
        if x > 0.0 || (p.fract() == 0.0 && p >= 0.0) {
            Ok(self.chain(
                x.powf(p),
                p * x.powf(p - 1.0),
                p * (p - 1.0) * x.powf(p - 2.0),
            ))
        } else {
            Err(ln_domain(x, "non-integer power"))
        }
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(mut self, rhs: Dual2) -> Dual2 {
        self.check_dim(&rhs);
        self.value += rhs.value;
        self.grad.iter_mut().zip(&rhs.grad).for_each(|(a, b)| *a += b);
        self.hess.iter_mut().zip(&rhs.hess).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, rhs: Dual2) -> Dual2 {
        self + (-rhs)
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(mut self) -> Dual2 {
        self.value = -self.value;
        self.grad.iter_mut().for_each(|g| *g = -*g);
        self.hess.iter_mut().for_each(|h| *h = -*h);
        self
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, rhs: Dual2) -> Dual2 {
        self.check_dim(&rhs);
        let d = self.dim();
        let (a, b) = (self.value, rhs.value);
        let grad = self
            .grad
            .iter()
            .zip(&rhs.grad)
            .map(|(ga, gb)| b * ga + a * gb)
            .collect();
        let mut hess = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let k = i * d + j;
                let cross = self.grad[i] * rhs.grad[j] + rhs.grad[i] * self.grad[j];
                hess[k] = b * self.hess[k] + a * rhs.hess[k] + cross;
            }
        }
        Dual2 {
            value: a * b,
            grad,
            hess,
        }
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Dual2) -> Dual2 {
        self * rhs.recip()
    }
}

impl Add<f64> for Dual2 {
    type Output = Dual2;
    fn add(mut self, rhs: f64) -> Dual2 {
        self.value += rhs;
        self
    }
}

impl Sub<f64> for Dual2 {
    type Output = Dual2;
    fn sub(mut self, rhs: f64) -> Dual2 {
        self.value -= rhs;
        self
    }
}

impl Mul<f64> for Dual2 {
    type Output = Dual2;
    fn mul(mut self, rhs: f64) -> Dual2 {
        self.value *= rhs;
        self.grad.iter_mut().for_each(|g| *g *= rhs);
        self.hess.iter_mut().for_each(|h| *h *= rhs);
        self
    }
}

impl Div<f64> for Dual2 {
    type Output = Dual2;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: f64) -> Dual2 {
        self * (1.0 / rhs)
    }
}

/// Seeds one dual variable per coordinate of `point`.
pub fn lift(point: &[f64]) -> Result<Vec<Dual2>> {
    let d = point.len();
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dual dimension must be in 1..={MAX_DIM}, got {d}"
        )));
    }
    Ok(point
        .iter()
        .enumerate()
        .map(|(j, &x)| Dual2::variable(x, j, d))
        .collect())
}

/// Value, gradient and Hessian of `f` at `point`.
pub fn grad_hess<F>(f: F, point: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&[Dual2]) -> Result<Dual2>,
{
    let seeds = lift(point)?;
    let out = f(&seeds)?;
    Ok((out.value, out.grad_vector(), out.hess_matrix()))
}

/// Finite-difference step used by [`fd_oracle`] in tests and diagnostics.
pub const FD_STEP: f64 = 1e-4;

/// Central-difference gradient and Hessian of `f` at `point`.
pub fn fd_oracle<F>(f: F, point: &[f64], h: f64) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let d = point.len();
    let eval = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut x = point.to_vec();
        for &(i, delta) in shifts {
            x[i] += delta;
        }
        f(&x)
    };
    let f0 = f(point)?;
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = eval(&[(i, h)])?;
        let fm = eval(&[(i, -h)])?;
        grad[i] = (fp - fm) / (2.0 * h);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in 0..i {
            let fpp = eval(&[(i, h), (j, h)])?;
            let fpm = eval(&[(i, h), (j, -h)])?;
            let fmp = eval(&[(i, -h), (j, h)])?;
            let fmm = eval(&[(i, -h), (j, -h)])?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok((grad, hess))
}
