//! Points of ℂⁿ and real-valued fields on them.
//!
//! Derivatives are carried in real coordinates `(x₁, y₁, …, xₙ, yₙ)` with
//! `z_j = x_j + i y_j`; conversion to Wirtinger form happens in [`crate::levi`].

use crate::error::Result;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type Point = Vec<Complex64>;
pub type TangentVector = Vec<Complex64>;

pub fn to_real(z: &[Complex64]) -> DVector<f64> {
    DVector::from_iterator(2 * z.len(), z.iter().flat_map(|c| [c.re, c.im]))
}

pub fn from_real(x: &DVector<f64>) -> Point {
    x.as_slice().chunks(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Parses a flat list `re₁,im₁,re₂,im₂,…`.
pub fn parse_point(text: &str) -> Result<Point> {
    let vals: std::result::Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| crate::Error::Usage(format!("`{text}` is not a list of reals")))?;
    if vals.is_empty() || vals.len() % 2 != 0 {
        return Err(crate::Error::Usage(format!(
            "`{text}` must have an even number of real coordinates"
        )));
    }
    Ok(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect())
}

pub fn norm(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Value, real gradient and real Hessian at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDerivs {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl RealDerivs {
    pub fn constant(value: f64, dim_real: usize) -> Self {
        RealDerivs {
            value,
            grad: DVector::zeros(dim_real),
            hess: DMatrix::zeros(dim_real, dim_real),
        }
    }

    /// `φ ∘ self` for a scalar `φ` given by `(φ, φ', φ'')` at `self.value`.
    pub fn compose(&self, phi: (f64, f64, f64)) -> RealDerivs {
        let (v, d1, d2) = phi;
        RealDerivs {
            value: v,
            grad: &self.grad * d1,
            hess: &self.hess * d1 + &self.grad * self.grad.transpose() * d2,
        }
    }

    pub fn add(&self, other: &RealDerivs) -> RealDerivs {
        RealDerivs {
            value: self.value + other.value,
            grad: &self.grad + &other.grad,
            hess: &self.hess + &other.hess,
        }
    }

    pub fn scale(&self, c: f64) -> RealDerivs {
        RealDerivs { value: self.value * c, grad: &self.grad * c, hess: &self.hess * c }
    }

    pub fn mul(&self, other: &RealDerivs) -> RealDerivs {
        let cross = &self.grad * other.grad.transpose();
        RealDerivs {
            value: self.value * other.value,
            grad: &self.grad * other.value + &other.grad * self.value,
            hess: &self.hess * other.value + &other.hess * self.value + &cross + cross.transpose(),
        }
    }
}

/// A real-valued field on (a subset of) ℂⁿ.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, z: &[Complex64]) -> Result<f64>;
    /// Analytic derivatives, when the field knows them.
    fn derivs(&self, _z: &[Complex64]) -> Option<Result<RealDerivs>> {
        None
    }
}

/// Adapts a closure into a [`ScalarField`] without analytic derivatives.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[Complex64]) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[Complex64]) -> f64 + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, z: &[Complex64]) -> Result<f64> {
        Ok((self.f)(z))
    }
}
