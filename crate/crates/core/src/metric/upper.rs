//! Upper bounds for the Kobayashi metric from explicit feasible discs.

use num_complex::Complex64;
use serde::Serialize;

use super::disc::{disc_feasible, AnalyticDisc};
use crate::domains::{ModelDomain, Shape};
use crate::field::{norm, Point};
use crate::{Error, Result};

/// Degree of the Fejér-smoothed slice disc used on the disc and the ball.
pub const SLICE_DISC_DEGREE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperOptions {
    /// Largest polynomial degree searched by the optimizer.
    pub degree: usize,
    /// Objective evaluations per degree stage.
    pub budget: usize,
    /// Angular samples per circle in the containment test.
    pub samples: usize,
}

impl Default for UpperOptions {
    fn default() -> Self {
        UpperOptions { degree: 3, budget: 2000, samples: 64 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperBound {
    /// `1 / r` for the best feasible disc found.
    pub value: f64,
    /// The best disc, with `g'(0)` a positive multiple of the direction.
    pub disc: AnalyticDisc,
    /// Which candidate produced the bound.
    pub source: &'static str,
    pub evaluations: usize,
}

/// Upper bound `K(z, X) ≤ 1/r` from the best feasible disc
/// `ζ ↦ z + κuζ + Σ_{k≥2} a_k ζ^k` over the unit disc, `u = X/|X|`.
///
/// Candidates are the affine disc, polynomial discs of each degree up to
/// `opts.degree` (Nelder–Mead over the higher coefficients, each stage
/// started from the previous optimum) and, on the disc and the ball, a
/// Fejér mean of the Möbius parametrization of the affine slice through `z`.
pub fn kobayashi_upper(domain: &ModelDomain, z: &[Complex64], x: &[Complex64], opts: &UpperOptions) -> Result<UpperBound> {
    let r = domain.eval_r(z)?;
    if r >= 0.0 {
        return Err(Error::NotInterior { r });
    }
    if x.len() != z.len() {
        return Err(Error::Usage("direction and point dimensions differ".into()));
    }
    let xn = norm(x);
    if !(xn > 0.0 && xn.is_finite()) {
        return Err(Error::Usage("direction must be nonzero".into()));
    }
    let u = canonical_direction(x);
    let un = norm(&u);
    let problem = Problem { domain, z, u: &u, samples: opts.samples.max(64) };

    let mut evaluations = 0;
    let linear = problem.max_kappa(&[], 1.0, &mut evaluations);
    if linear <= 0.0 {
        return Err(Error::NoFeasibleDisc(format!("no affine disc through {z:?} is feasible")));
    }
    let mut best = (linear, problem.disc(linear, &[]), "affine");

    let mut higher: Vec<f64> = Vec::new();
    for degree in 2..=opts.degree.max(1) {
        higher.extend(std::iter::repeat(0.0).take(2 * z.len()));
        let step = 0.25 * best.0;
        let mut count = 0;
        let objective = |p: &[f64], count: &mut usize| -problem.max_kappa(&unpack(p, z.len()), best.0, count);
        let (p, v) = nelder_mead(&higher, step, opts.budget.max(1), |p| objective(p, &mut count));
        evaluations += count;
        higher = p;
        if -v > best.0 {
            best = (-v, problem.disc(-v, &unpack(&higher, z.len())), if degree == 2 { "degree_2" } else { "degree_3_plus" });
        }
    }

    if matches!(domain.shape(), Shape::Disc | Shape::Ball { .. }) {
        let slice = slice_disc(z, &u, SLICE_DISC_DEGREE);
        let speed = norm(&slice.coeffs[1]);
        let s = problem.max_scale(&slice, &mut evaluations);
        if s * speed > best.0 {
            let disc = AnalyticDisc { scale: s, ..slice }.rescaled_to_unit();
            best = (s * speed, disc, "slice_disc");
        }
    }
    Ok(UpperBound { value: xn / (best.0 * un), disc: best.1, source: best.2, evaluations })
}

/// `X/|X|` rotated so its largest component is real and positive, then
/// rounded to a fixed binary grid so that `X` and `cX` map to the same vector.
pub fn canonical_direction(x: &[Complex64]) -> Point {
    let xn = norm(x);
    let mut i = 0;
    for (k, c) in x.iter().enumerate() {
        if c.norm() > x[i].norm() {
            i = k;
        }
    }
    let phase = x[i].conj() / x[i].norm();
    let q = 2f64.powi(40);
    x.iter()
        .map(|c| {
            let v = c * phase / xn;
            Complex64::new((v.re * q).round() / q, (v.im * q).round() / q)
        })
        .collect()
}

fn unpack(p: &[f64], n: usize) -> Vec<Point> {
    p.chunks(2 * n)
        .map(|c| c.chunks(2).map(|v| Complex64::new(v[0], v[1])).collect())
        .collect()
}

struct Problem<'a> {
    domain: &'a ModelDomain,
    z: &'a [Complex64],
    u: &'a [Complex64],
    samples: usize,
}

impl Problem<'_> {
    fn disc(&self, kappa: f64, higher: &[Point]) -> AnalyticDisc {
        let mut coeffs = vec![self.z.to_vec(), self.u.iter().map(|c| c * kappa).collect()];
        coeffs.extend(higher.iter().cloned());
        AnalyticDisc { coeffs, scale: 1.0 }
    }

    fn feasible(&self, disc: &AnalyticDisc, count: &mut usize) -> bool {
        *count += 1;
        disc_feasible(self.domain, disc, self.samples).feasible
    }

    /// Largest `κ` with a feasible disc, by doubling from `guess` and bisection.
    fn max_kappa(&self, higher: &[Point], guess: f64, count: &mut usize) -> f64 {
        if !self.feasible(&self.disc(0.0, higher), count) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, guess);
        while self.feasible(&self.disc(hi, higher), count) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return lo;
            }
        }
        while hi - lo > 1e-10 * hi {
            let mid = 0.5 * (lo + hi);
            if self.feasible(&self.disc(mid, higher), count) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Largest scale `s ≤ 1` at which `disc` is feasible.
    fn max_scale(&self, disc: &AnalyticDisc, count: &mut usize) -> f64 {
        let at = |s: f64, count: &mut usize| self.feasible(&AnalyticDisc { scale: s, ..disc.clone() }, count);
        if at(1.0, count) {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if at(mid, count) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// Fejér mean of degree `n` of the Möbius parametrization of the affine
/// slice `{z + λu} ∩ B`, sending `0 ↦ z` with positive derivative along `u`.
/// Fejér means of a map into a convex set stay in that set.
pub fn slice_disc(z: &[Complex64], u: &[Complex64], n: usize) -> AnalyticDisc {
    let un = norm(u);
    let e: Vec<Complex64> = u.iter().map(|c| c / un).collect();
    // λ ranges over the disc about −b of radius R
    let b: Complex64 = z.iter().zip(&e).map(|(zj, ej)| zj * ej.conj()).sum();
    let radius = (1.0 - norm(z).powi(2) + b.norm_sqr()).sqrt();
    let a = b / radius;
    let mut coeffs = vec![z.to_vec()];
    let mut m = Complex64::new(1.0 - a.norm_sqr(), 0.0);
    for k in 1..=n {
        let w = radius * (1.0 - k as f64 / (n + 1) as f64);
        coeffs.push(e.iter().map(|c| c * m * w).collect());
        m *= -a.conj();
    }
    AnalyticDisc { coeffs, scale: 1.0 }
}

/// Deterministic Nelder–Mead minimization with an axis-aligned start simplex.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(start: &[f64], step: f64, budget: usize, mut f: F) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = f(start);
    simplex.push((start.to_vec(), v0));
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += step;
        let v = f(&p);
        simplex.push((p, v));
    }
    let mut used = dim + 1;
    while used < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[dim].1 - simplex[0].1).abs() <= 1e-13 * simplex[0].1.abs().max(1e-300) {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|p| p.0[k]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (w - c)).collect()
        };
        let worst = simplex[dim].0.clone();
        let refl = toward(-1.0, &worst);
        let fr = f(&refl);
        used += 1;
        if fr < simplex[0].1 {
            let exp = toward(-2.0, &worst);
            let fe = f(&exp);
            used += 1;
            simplex[dim] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (refl, fr);
        } else {
            let con = if fr < simplex[dim].1 { toward(-0.5, &worst) } else { toward(0.5, &worst) };
            let fc = f(&con);
            used += 1;
            if fc < fr.min(simplex[dim].1) {
                simplex[dim] = (con, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = best.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    p.1 = f(&p.0);
                    used += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
