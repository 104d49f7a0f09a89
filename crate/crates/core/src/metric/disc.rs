//! Polynomial analytic discs and the containment test.

use num_complex::Complex64;
use serde::Serialize;

use crate::domains::ModelDomain;
use crate::field::Point;

/// Smallest admissible distance below zero of `r` on a feasible disc.
pub const MARGIN_FLOOR: f64 = 1e-12;

/// `g(ζ) = Σ c_k ζ^k` on the closed disc `|ζ| ≤ scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticDisc {
    pub coeffs: Vec<Point>,
    pub scale: f64,
}

impl AnalyticDisc {
    pub fn new(coeffs: Vec<Point>, scale: f64) -> Self {
        AnalyticDisc { coeffs, scale }
    }

    /// The affine disc `z + ζX`.
    pub fn linear(z: &[Complex64], x: &[Complex64], scale: f64) -> Self {
        AnalyticDisc { coeffs: vec![z.to_vec(), x.to_vec()], scale }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    pub fn center(&self) -> &[Complex64] {
        &self.coeffs[0]
    }

    /// `g'(0)`, or zero for a constant disc.
    pub fn derivative_at_center(&self) -> Point {
        self.coeffs.get(1).cloned().unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); self.dim()])
    }

    /// Horner evaluation of `g(ζ)`.
    pub fn eval(&self, zeta: Complex64) -> Point {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for c in self.coeffs.iter().rev() {
            for (o, ck) in out.iter_mut().zip(c) {
                *o = *o * zeta + ck;
            }
        }
        out
    }

    /// The same map restricted to `|ζ| ≤ s`, reparametrized over the unit
    /// disc: `ζ ↦ g(sζ)`.
    pub fn rescaled_to_unit(&self) -> AnalyticDisc {
        let mut p = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                let out = c.iter().map(|v| v * p).collect();
                p *= self.scale;
                out
            })
            .collect();
        AnalyticDisc { coeffs, scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// Largest sampled value of `r ∘ g`.
    pub max_r: f64,
    /// `ζ` at which the maximum (or a patch exit) occurred.
    pub witness: Option<(f64, f64)>,
}

/// Samples `r ∘ g` on concentric circles and an angular grid. When `r` is
/// plurisubharmonic only the outer circle is sampled.
pub fn disc_feasible(domain: &ModelDomain, disc: &AnalyticDisc, samples: usize) -> Feasibility {
    let samples = samples.max(64).max(8 * disc.degree());
    let circles = if domain.r_is_psh() { 1 } else { 32 };
    let mut max_r = f64::NEG_INFINITY;
    let mut witness = None;
    for k in 0..circles {
        let rad = disc.scale * (1.0 - k as f64 / circles as f64);
        for j in 0..samples {
            let zeta = Complex64::from_polar(rad, std::f64::consts::TAU * j as f64 / samples as f64);
            let z = disc.eval(zeta);
            let r = match domain.eval_r(&z) {
                Ok(r) if r.is_finite() => r,
                _ => return Feasibility { feasible: false, max_r: f64::INFINITY, witness: Some((zeta.re, zeta.im)) },
            };
            if r > max_r {
                max_r = r;
                witness = Some((zeta.re, zeta.im));
            }
        }
    }
    Feasibility { feasible: max_r < -MARGIN_FLOOR, max_r, witness }
}
