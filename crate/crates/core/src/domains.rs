//! Model pseudoconvex domains, their defining functions and candidate
//! f-Property families.
//!
//! Every family is exposed as `F_δ(v, z)` where `v` stands in for `r(z)`.
//! The f-Property is checked on `F_δ(r(z), z)` over the strip `−δ < r < 0`;
//! the bumping construction uses the translate `F_δ(r(z) − shift·δ, z)`.

use crate::cutoff::plateau;
use crate::error::{Error, Result};
use crate::field::{dist, from_real, norm, to_real, Point, RealDerivs, ScalarField};
use crate::levi::{complex_from_real_grad, hermitian_eigenvalues};
use crate::quad::bisect;
use crate::rates::RateFunction;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Unit disc in ℂ.
    Disc,
    /// Unit ball in ℂⁿ.
    Ball { n: usize },
    /// `{Im z₂ + |z₁|^{2m} < 0}` near the origin.
    FiniteGraph { m: u32 },
    /// `{|z₁|^{2m} + |z₂|² < 1}`.
    Ellipsoid { m: u32 },
    /// `{Im z₂ + P(Re z₁) < 0}` near the origin, `P(x) = exp(−1/|x|^α)` cut off.
    InfiniteGraph { alpha: f64 },
}

/// Weight of the tangential bump in the graph-domain families.
const BUMP_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct Patch {
    pub center: Vec<f64>,
    /// Half-widths per real coordinate; `None` when the domain is global.
    pub half_widths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainDescriptor {
    pub name: String,
    pub shape: Shape,
    pub dim: usize,
    pub base_point: Vec<f64>,
    pub patch: Patch,
    pub reach: f64,
    pub smoothness: &'static str,
    pub r_is_psh: bool,
    pub declared_rate: String,
    pub translation_shift: f64,
    pub reversed_family: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDomain {
    shape: Shape,
    rate: RateFunction,
    shift: f64,
    reversed: bool,
}

impl ModelDomain {
    pub fn new(shape: Shape) -> Result<Self> {
        let rate = match shape {
            Shape::Disc | Shape::Ball { .. } => RateFunction::power(0.5)?,
            Shape::FiniteGraph { m } | Shape::Ellipsoid { m } => {
                if m == 0 {
                    return Err(Error::Usage("type m must be positive".into()));
                }
                RateFunction::power(1.0 / (2.0 * m as f64))?
            }
            Shape::InfiniteGraph { alpha } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::Usage(format!("alpha = {alpha} must lie in (0, 1)")));
                }
                RateFunction::log_power(1.0 / alpha)?
            }
        };
        if let Shape::Ball { n } = shape {
            if n == 0 {
                return Err(Error::Usage("ball dimension must be positive".into()));
            }
        }
        Ok(ModelDomain { shape, rate, shift: 2.0, reversed: false })
    }

    pub fn disc() -> Self {
        Self::new(Shape::Disc).expect("valid shape")
    }
    pub fn ball(n: usize) -> Result<Self> {
        Self::new(Shape::Ball { n })
    }
    pub fn finite_graph(m: u32) -> Result<Self> {
        Self::new(Shape::FiniteGraph { m })
    }
    pub fn ellipsoid(m: u32) -> Result<Self> {
        Self::new(Shape::Ellipsoid { m })
    }
    pub fn infinite_graph(alpha: f64) -> Result<Self> {
        Self::new(Shape::InfiniteGraph { alpha })
    }

    /// Parses `D1`, `D2[:n]`, `D3[:m]`, `D4[:m]`, `D5[:alpha]`.
    pub fn parse(text: &str) -> Result<Self> {
        let (head, arg) = match text.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (text, None),
        };
        let bad = || Error::Usage(format!("cannot parse domain parameter in `{text}`"));
        let int = |d: u32| -> Result<u32> { arg.map_or(Ok(d), |a| a.parse().map_err(|_| bad())) };
        match head.to_ascii_uppercase().as_str() {
            "D1" | "DISC" => Ok(Self::disc()),
            "D2" | "BALL" => Self::ball(int(2)? as usize),
            "D3" => Self::finite_graph(int(2)?),
            "D4" => Self::ellipsoid(int(2)?),
            "D5" => Self::infinite_graph(arg.map_or(Ok(0.5), |a| a.parse().map_err(|_| bad()))?),
            _ => Err(Error::UnsupportedDomain(text.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self.shape {
            Shape::Disc => "D1".into(),
            Shape::Ball { n } => format!("D2:{n}"),
            Shape::FiniteGraph { m } => format!("D3:{m}"),
            Shape::Ellipsoid { m } => format!("D4:{m}"),
            Shape::InfiniteGraph { alpha } => format!("D5:{alpha}"),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Replaces the declared rate.
    pub fn with_rate(mut self, rate: RateFunction) -> Self {
        self.rate = rate;
        self
    }

    /// Sets the translation `v = r − shift·δ` used by the bumping construction.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    /// Swaps the shipped family for `−r/δ`, which is plurisuperharmonic
    /// wherever `r` is plurisubharmonic. Used as a negative control.
    pub fn with_reversed_family(mut self) -> Self {
        self.reversed = true;
        self
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn declared_rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Disc => 1,
            Shape::Ball { n } => n,
            _ => 2,
        }
    }

    /// Distinguished boundary point.
    pub fn base_point(&self) -> Point {
        let mut p = vec![Complex64::new(0.0, 0.0); self.dim()];
        match self.shape {
            Shape::Disc | Shape::Ball { .. } => p[0] = Complex64::new(1.0, 0.0),
            Shape::Ellipsoid { .. } => p[1] = Complex64::new(1.0, 0.0),
            _ => {}
        }
        p
    }

    pub fn patch(&self) -> Patch {
        let center = to_real(&self.base_point()).as_slice().to_vec();
        let half_widths = match self.shape {
            Shape::Disc | Shape::Ball { .. } | Shape::Ellipsoid { .. } => None,
            Shape::FiniteGraph { .. } => Some(vec![0.5; 4]),
            Shape::InfiniteGraph { alpha } => Some(vec![Self::d5_halfwidth(alpha), 0.5, 0.5, 0.5]),
        };
        Patch { center, half_widths }
    }

    /// Below this half-width in `Re z₁`, `P'' ≥ 0` with room to spare.
    fn d5_halfwidth(alpha: f64) -> f64 {
        (0.5 * (alpha / (alpha + 1.0)).powf(1.0 / alpha)).min(0.05)
    }

    pub fn in_patch(&self, z: &[Complex64]) -> bool {
        if z.len() != self.dim() || z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return false;
        }
        let p = self.patch();
        match p.half_widths {
            None => true,
            Some(hw) => to_real(z)
                .iter()
                .zip(p.center.iter().zip(hw))
                .all(|(x, (c, h))| (x - c).abs() < h),
        }
    }

    /// Radius below which nearest boundary points are unique.
    pub fn reach(&self) -> f64 {
        match self.shape {
            Shape::Disc | Shape::Ball { .. } => 0.3,
            _ => 0.05,
        }
    }

    /// Whether `r` itself is plurisubharmonic on the patch.
    pub fn r_is_psh(&self) -> bool {
        !matches!(self.shape, Shape::InfiniteGraph { .. })
    }

    pub fn smoothness(&self) -> &'static str {
        match self.shape {
            Shape::InfiniteGraph { .. } => "C2",
            _ => "Cinf",
        }
    }

    pub fn descriptor(&self) -> DomainDescriptor {
        DomainDescriptor {
            name: self.name(),
            shape: self.shape,
            dim: self.dim(),
            base_point: to_real(&self.base_point()).as_slice().to_vec(),
            patch: self.patch(),
            reach: self.reach(),
            smoothness: self.smoothness(),
            r_is_psh: self.r_is_psh(),
            declared_rate: format!("{:?}", self.rate.family()),
            translation_shift: self.shift,
            reversed_family: self.reversed,
        }
    }

    fn check_point(&self, z: &[Complex64]) -> Result<()> {
        if self.in_patch(z) {
            Ok(())
        } else {
            Err(Error::OutOfPatch { domain: self.name() })
        }
    }

    /// Analytic derivatives of `r`; no patch check.
    pub fn r_derivs_unchecked(&self, z: &[Complex64]) -> RealDerivs {
        let m = 2 * z.len();
        match self.shape {
            Shape::Disc | Shape::Ball { .. } => {
                let x = to_real(z);
                RealDerivs {
                    value: x.norm_squared() - 1.0,
                    grad: &x * 2.0,
                    hess: DMatrix::identity(m, m) * 2.0,
                }
            }
            Shape::FiniteGraph { m: k } | Shape::Ellipsoid { m: k } => {
                let k = k as i32;
                let s = z[0].norm_sqr();
                let mut s_d = RealDerivs::constant(s, m);
                s_d.grad[0] = 2.0 * z[0].re;
                s_d.grad[1] = 2.0 * z[0].im;
                s_d.hess[(0, 0)] = 2.0;
                s_d.hess[(1, 1)] = 2.0;
                let kf = k as f64;
                let pow = if k >= 2 { (kf - 1.0) * kf * s.powi(k - 2) } else { 0.0 };
                let mut out = s_d.compose((s.powi(k), kf * s.powi(k - 1), pow));
                if matches!(self.shape, Shape::FiniteGraph { .. }) {
                    out.value += z[1].im;
                    out.grad[3] += 1.0;
                } else {
                    out.value += z[1].norm_sqr() - 1.0;
                    out.grad[2] += 2.0 * z[1].re;
                    out.grad[3] += 2.0 * z[1].im;
                    out.hess[(2, 2)] += 2.0;
                    out.hess[(3, 3)] += 2.0;
                }
                out
            }
            Shape::InfiniteGraph { alpha } => {
                let (p, p1, p2) = Self::graph_profile(alpha, z[0].re);
                let mut out = RealDerivs::constant(p + z[1].im, m);
                out.grad[0] = p1;
                out.grad[3] = 1.0;
                out.hess[(0, 0)] = p2;
                out
            }
        }
    }

    /// `P(x) = χ(x)·exp(−1/|x|^α)` and its first two derivatives.
    pub fn graph_profile(alpha: f64, x: f64) -> (f64, f64, f64) {
        let ax = x.abs();
        if ax == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let e = (-ax.powf(-alpha)).exp();
        if e == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let sign = x.signum();
        let a1 = alpha * ax.powf(-alpha - 1.0);
        let e1 = sign * e * a1;
        let e2 = e * (a1 * a1 - alpha * (alpha + 1.0) * ax.powf(-alpha - 2.0));
        let (c, c1, c2) = plateau(x, 0.25, 0.5);
        (c * e, c1 * e + c * e1, c2 * e + 2.0 * c1 * e1 + c * e2)
    }

    /// Bound on the rounding error of `r(z)` in double precision.
    pub fn r_rounding(&self, z: &[Complex64]) -> f64 {
        let mag = match self.shape {
            Shape::Disc | Shape::Ball { .. } => norm(z).powi(2) + 1.0,
            Shape::FiniteGraph { m } => z[1].im.abs() + z[0].norm_sqr().powi(m as i32),
            Shape::Ellipsoid { m } => z[0].norm_sqr().powi(m as i32) + z[1].norm_sqr() + 1.0,
            Shape::InfiniteGraph { alpha } => z[1].im.abs() + Self::graph_profile(alpha, z[0].re).0,
        };
        8.0 * f64::EPSILON * mag
    }

    pub fn eval_r(&self, z: &[Complex64]) -> Result<f64> {
        self.check_point(z)?;
        Ok(self.r_derivs_unchecked(z).value)
    }

    /// `ℓ_δ = 1 / f(1/δ)`, the tangential length scale of the family.
    pub fn tangential_scale(&self, delta: f64) -> Result<f64> {
        Ok(1.0 / self.rate.eval(1.0 / delta)?)
    }

    /// Derivatives of `F_δ(r(z) − offset·δ, z)`.
    pub fn family_derivs(&self, delta: f64, offset: f64, z: &[Complex64]) -> Result<RealDerivs> {
        if !(delta > 0.0) {
            return Err(Error::Domain { what: "delta", value: delta, floor: 0.0 });
        }
        let r = self.r_derivs_unchecked(z);
        let mut t = r.scale(1.0 / delta);
        t.value -= offset;
        if self.reversed {
            return Ok(t.scale(-1.0));
        }
        match self.shape {
            Shape::Disc | Shape::Ball { .. } => Ok(t),
            _ => {
                let ell = self.tangential_scale(delta)?;
                let m = 2 * z.len();
                let mut q = RealDerivs::constant(0.0, m);
                let inv = 1.0 / (ell * ell);
                q.value = z[0].re * z[0].re * inv;
                q.grad[0] = 2.0 * z[0].re * inv;
                q.hess[(0, 0)] = 2.0 * inv;
                if !matches!(self.shape, Shape::InfiniteGraph { .. }) {
                    q.value += z[0].im * z[0].im * inv;
                    q.grad[1] = 2.0 * z[0].im * inv;
                    q.hess[(1, 1)] = 2.0 * inv;
                }
                let tv = t.value;
                let normal = t.compose((
                    (4.0 / 3.0) * (tv + 0.25 * tv * tv),
                    (4.0 / 3.0) * (1.0 + 0.5 * tv),
                    2.0 / 3.0,
                ));
                let e = (-0.5 * q.value).exp();
                let bump = q.compose((-e, 0.5 * e, -0.25 * e));
                Ok(normal.scale(1.0 - BUMP_WEIGHT).add(&bump.scale(BUMP_WEIGHT)))
            }
        }
    }

    /// The f-Property candidate `φ_δ` as a field.
    pub fn phi(&self, delta: f64) -> FamilyField<'_> {
        FamilyField { domain: self, delta, offset: 0.0 }
    }

    /// The translated family used outside the domain by the bumping construction.
    pub fn translated_phi(&self, delta: f64) -> FamilyField<'_> {
        FamilyField { domain: self, delta, offset: self.shift }
    }

    fn kkt_project(&self, z: &[Complex64], start: &[Complex64]) -> Option<Point> {
        let zr = to_real(z);
        let mut x = to_real(start);
        let m = x.len();
        let d = self.r_derivs_unchecked(start);
        let gn = d.grad.norm_squared();
        if gn == 0.0 {
            return None;
        }
        let mut lam = (&zr - &x).dot(&d.grad) / gn;
        let resid = |x: &DVector<f64>, lam: f64| -> (DVector<f64>, RealDerivs) {
            let d = self.r_derivs_unchecked(&from_real(x));
            let mut f = DVector::zeros(m + 1);
            let stat = x - &zr + &d.grad * lam;
            f.rows_mut(0, m).copy_from(&stat);
            f[m] = d.value;
            (f, d)
        };
        let (mut f, mut d) = resid(&x, lam);
        for _ in 0..80 {
            if f.norm() < 1e-15 {
                break;
            }
            let mut jac = DMatrix::zeros(m + 1, m + 1);
            let block = DMatrix::identity(m, m) + &d.hess * lam;
            jac.view_mut((0, 0), (m, m)).copy_from(&block);
            for i in 0..m {
                jac[(i, m)] = d.grad[i];
                jac[(m, i)] = d.grad[i];
            }
            let step = jac.lu().solve(&(-&f))?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let xn = &x + step.rows(0, m) * scale;
                let ln = lam + step[m] * scale;
                let (fnew, dnew) = resid(&xn, ln);
                if fnew.norm() < f.norm() || fnew.norm() < 1e-15 {
                    x = xn;
                    lam = ln;
                    f = fnew;
                    d = dnew;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if d.value.abs() <= 1e-12 && f.norm() <= 1e-9 && x.iter().all(|v| v.is_finite()) {
            Some(from_real(&x))
        } else {
            None
        }
    }

    fn projection_starts(&self, z: &[Complex64]) -> Vec<Point> {
        let mut starts = Vec::new();
        // Newton along the gradient
        let mut w = z.to_vec();
        for _ in 0..60 {
            let d = self.r_derivs_unchecked(&w);
            let gn = d.grad.norm_squared();
            if gn == 0.0 {
                break;
            }
            let x = to_real(&w) - &d.grad * (d.value / gn);
            w = from_real(&x);
            if d.value.abs() < 1e-15 {
                break;
            }
        }
        starts.push(w);
        match self.shape {
            Shape::FiniteGraph { .. } | Shape::InfiniteGraph { .. } => {
                let mut v = z.to_vec();
                let r = self.r_derivs_unchecked(z).value;
                v[1].im -= r;
                starts.push(v);
            }
            Shape::Ellipsoid { m } => {
                let rest = 1.0 - z[0].norm_sqr().powi(m as i32);
                if rest > 0.0 && z[1].norm() > 0.0 {
                    starts.push(vec![z[0], z[1] / z[1].norm() * rest.sqrt()]);
                }
            }
            _ => {}
        }
        starts
    }

    /// Nearest boundary point.
    pub fn boundary_project(&self, z: &[Complex64]) -> Result<Point> {
        let r = self.eval_r(z)?;
        if r >= 0.0 {
            return Err(Error::NotInterior { r });
        }
        if let Shape::Disc | Shape::Ball { .. } = self.shape {
            let nz = norm(z);
            if nz < 1e-12 {
                return Err(Error::NonUnique("every boundary point is equidistant from the center".into()));
            }
            return Ok(z.iter().map(|c| c / nz).collect());
        }
        let mut cands: Vec<(f64, Point)> = Vec::new();
        for s in self.projection_starts(z) {
            if let Some(w) = self.kkt_project(z, &s) {
                cands.push((dist(z, &w), w));
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let Some((best_d, best)) = cands.first().cloned() else {
            return Err(Error::Evaluation("projection did not converge".into()));
        };
        for (d, w) in cands.iter().skip(1) {
            if (d - best_d).abs() < 1e-6 * best_d.max(1e-300) && dist(w, &best) > 1e-6 {
                return Err(Error::NonUnique(format!(
                    "candidates at distance {best_d} and {d} are {} apart",
                    dist(w, &best)
                )));
            }
        }
        Ok(best)
    }

    /// Euclidean distance to the boundary.
    pub fn boundary_distance(&self, z: &[Complex64]) -> Result<f64> {
        if let Shape::Disc | Shape::Ball { .. } = self.shape {
            let r = self.eval_r(z)?;
            if r >= 0.0 {
                return Err(Error::NotInterior { r });
            }
            return Ok(1.0 - norm(z));
        }
        let w = self.boundary_project(z)?;
        Ok(dist(z, &w))
    }

    /// Unit outward normal `∇r/|∇r|` at `z`.
    pub fn unit_normal(&self, z: &[Complex64]) -> Result<Point> {
        let d = self.r_derivs_unchecked(z);
        let gn = d.grad.norm();
        if gn < 1e-12 {
            return Err(Error::DegenerateGradient(gn));
        }
        Ok(from_real(&(d.grad / gn)))
    }

    /// Random boundary points in the sampling region of the patch.
    pub fn sample_boundary<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<Point> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        (0..count)
            .map(|_| match self.shape {
                Shape::Disc => {
                    let th: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                    vec![c(th.cos(), th.sin())]
                }
                Shape::Ball { n } => loop {
                    let v: Vec<Complex64> = (0..n)
                        .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect();
                    let nv = norm(&v);
                    if nv > 1e-3 && nv <= 1.0 {
                        break v.into_iter().map(|x| x / nv).collect();
                    }
                },
                Shape::FiniteGraph { m } => {
                    let z1 = c(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                    let x2 = rng.gen_range(-0.3..0.3);
                    vec![z1, c(x2, -z1.norm_sqr().powi(m as i32))]
                }
                Shape::Ellipsoid { m } => {
                    let z1 = c(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                    let th: f64 = rng.gen_range(-0.3..0.3);
                    let rad = (1.0 - z1.norm_sqr().powi(m as i32)).sqrt();
                    vec![z1, c(rad * th.cos(), rad * th.sin())]
                }
                Shape::InfiniteGraph { alpha } => {
                    let hw = 0.9 * Self::d5_halfwidth(alpha);
                    let x1 = rng.gen_range(-hw..hw);
                    let z1 = c(x1, rng.gen_range(-0.3..0.3));
                    vec![z1, c(rng.gen_range(-0.3..0.3), -Self::graph_profile(alpha, x1).0)]
                }
            })
            .collect()
    }

    /// Moves from boundary point `w` along the inward normal until `r = target`
    /// (`target < 0`).
    pub fn inward_to_level(&self, w: &[Complex64], target: f64) -> Result<Point> {
        let n = self.unit_normal(w)?;
        let g = self.r_derivs_unchecked(w).grad.norm();
        let along = |s: f64| -> Point { w.iter().zip(&n).map(|(a, b)| a - b * s).collect() };
        let mut hi = 2.0 * target.abs() / g;
        while self.r_derivs_unchecked(&along(hi)).value > target {
            hi *= 2.0;
            if hi > 1.0 {
                return Err(Error::Evaluation("level set not reached along the normal".into()));
            }
        }
        let s = bisect(|s| self.r_derivs_unchecked(&along(s)).value - target, 0.0, hi, 1e-16)
            .ok_or_else(|| Error::Evaluation("no sign change along the normal".into()))?;
        Ok(along(s))
    }

    /// Random points of the strip `−δ < r < 0` inside the patch.
    pub fn strip_points<R: Rng>(&self, rng: &mut R, delta: f64, count: usize) -> Result<Vec<Point>> {
        let mut out = Vec::with_capacity(count);
        let mut tries = 0;
        while out.len() < count {
            tries += 1;
            if tries > 20 * count + 100 {
                return Err(Error::Evaluation("could not place strip points in the patch".into()));
            }
            let w = self.sample_boundary(rng, 1).pop().expect("one sample");
            let u: f64 = rng.gen_range(0.02..0.98);
            let z = self.inward_to_level(&w, -u * delta)?;
            if self.in_patch(&z) {
                out.push(z);
            }
        }
        Ok(out)
    }

    /// Numerical f-Property check of `φ_δ` on the given strip points.
    pub fn fproperty_check(&self, delta: f64, grid: &[Point]) -> Result<FPropertyReport> {
        let fsq = self.rate.eval(1.0 / delta)?.powi(2);
        let mut rep = FPropertyReport {
            domain: self.name(),
            delta,
            points: grid.len(),
            value_range_ok: true,
            min_value: f64::INFINITY,
            max_value: f64::NEG_INFINITY,
            best_c: f64::INFINITY,
            best_gradient_constant: 0.0,
            worst_point: None,
            fd_discrepancy: 0.0,
            pass: false,
        };
        let field = self.phi(delta);
        for (i, z) in grid.iter().enumerate() {
            let r = self.eval_r(z)?;
            if !(r > -delta && r < 0.0) {
                return Err(Error::StripViolation { r, delta });
            }
            let d = self.family_derivs(delta, 0.0, z)?;
            rep.min_value = rep.min_value.min(d.value);
            rep.max_value = rep.max_value.max(d.value);
            if !(-1.0..=0.0).contains(&d.value) {
                rep.value_range_ok = false;
            }
            let h = crate::levi::complex_from_real_hess(&d.hess);
            let ev = hermitian_eigenvalues(&h)[0];
            let c = ev / fsq;
            if c < rep.best_c {
                rep.best_c = c;
                rep.worst_point = Some(to_real(z).as_slice().to_vec());
            }
            let gnorm = norm(&complex_from_real_grad(&d.grad)) * 2.0;
            rep.best_gradient_constant = rep.best_gradient_constant.max(gnorm * delta);
            if i < 8 {
                let ell = self.tangential_scale(delta)?;
                let fd = crate::levi::complex_hessian_fd(&field, z, Some(1e-2 * delta.min(ell)))
                    .map(|x| x.matrix)
                    .ok();
                if let Some(fd) = fd {
                    let scale = h.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
                    let diff = (&fd - &h).iter().map(|c| c.norm()).fold(0.0, f64::max);
                    rep.fd_discrepancy = rep.fd_discrepancy.max(diff / scale);
                }
            }
        }
        rep.pass = rep.value_range_ok && rep.best_c > 0.0 && !grid.is_empty();
        Ok(rep)
    }
}

impl ScalarField for ModelDomain {
    fn dim(&self) -> usize {
        ModelDomain::dim(self)
    }
    fn value(&self, z: &[Complex64]) -> Result<f64> {
        self.eval_r(z)
    }
    fn derivs(&self, z: &[Complex64]) -> Option<Result<RealDerivs>> {
        Some(self.check_point(z).map(|_| self.r_derivs_unchecked(z)))
    }
}

/// `z ↦ F_δ(r(z) − offset·δ, z)`.
pub struct FamilyField<'a> {
    domain: &'a ModelDomain,
    delta: f64,
    offset: f64,
}

impl ScalarField for FamilyField<'_> {
    fn dim(&self) -> usize {
        self.domain.dim()
    }
    fn value(&self, z: &[Complex64]) -> Result<f64> {
        Ok(self.domain.family_derivs(self.delta, self.offset, z)?.value)
    }
    fn derivs(&self, z: &[Complex64]) -> Option<Result<RealDerivs>> {
        Some(self.domain.family_derivs(self.delta, self.offset, z))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FPropertyReport {
    pub domain: String,
    pub delta: f64,
    pub points: usize,
    pub value_range_ok: bool,
    pub min_value: f64,
    pub max_value: f64,
    /// Smallest `λ_min(∂∂̄φ_δ) / f(1/δ)²` over the grid.
    pub best_c: f64,
    /// Largest `δ·|Dφ_δ|` over the grid.
    pub best_gradient_constant: f64,
    pub worst_point: Option<Vec<f64>>,
    /// Relative max-entry gap between analytic and finite-difference Hessians
    /// on the first few grid points.
    pub fd_discrepancy: f64,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levi::{complex_hessian_fd, min_levi_eigenvalue, tangential_basis, hermitian_form};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn defining_function_values() {
        let d2 = ModelDomain::ball(2).unwrap();
        assert_eq!(d2.eval_r(&[c(0.0, 0.0), c(0.0, 0.0)]).unwrap(), -1.0);
        assert_eq!(d2.eval_r(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap(), 0.0);
        let d3 = ModelDomain::finite_graph(2).unwrap();
        let v = d3.eval_r(&[c(0.1, 0.0), c(0.0, 0.2)]).unwrap();
        assert!((v - 0.2001).abs() < 1e-15);
        assert!(d3.eval_r(&[c(0.9, 0.0), c(0.0, 0.0)]).is_err());
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in ["D1", "D2", "D3", "D3:3", "D4", "D5"] {
            let d = ModelDomain::parse(name).unwrap();
            for z in d.strip_points(&mut rng, 0.01, 5).unwrap() {
                let an = d.r_derivs_unchecked(&z);
                let fd = crate::levi::real_gradient_fd(&d, &z, 1e-6).unwrap();
                assert!((an.grad.clone() - fd).amax() < 1e-7, "{name}");
                let h = complex_hessian_fd(&d, &z, Some(1e-3)).unwrap().matrix;
                let ha = crate::levi::complex_from_real_hess(&an.hess);
                let gap = (&h - &ha).iter().map(|x| x.norm()).fold(0.0, f64::max);
                assert!(gap < 1e-5 * (1.0 + ha.iter().map(|x| x.norm()).fold(0.0, f64::max)), "{name} {gap}");
                for delta in [1e-2, 1e-3] {
                    let phi = d.phi(delta);
                    let an = d.family_derivs(delta, 0.0, &z).unwrap();
                    let step = 1e-4 * delta;
                    let fd = crate::levi::real_gradient_fd(&phi, &z, step).unwrap();
                    let rel = (an.grad.clone() - fd).amax() / an.grad.amax();
                    assert!(rel < 1e-5, "{name} {delta} {rel}");
                }
            }
        }
    }

    #[test]
    fn ball_distance_and_projection() {
        let d2 = ModelDomain::ball(2).unwrap();
        let z = [c(0.5, 0.0), c(0.0, 0.0)];
        assert!((d2.boundary_distance(&z).unwrap() - 0.5).abs() < 1e-15);
        let w = d2.boundary_project(&z).unwrap();
        assert!(dist(&w, &[c(1.0, 0.0), c(0.0, 0.0)]) < 1e-15);
        let d1 = ModelDomain::disc();
        assert!((d1.boundary_distance(&[c(0.9, 0.0)]).unwrap() - 0.1).abs() < 1e-15);
        let w = d1.boundary_project(&[c(0.3, 0.4)]).unwrap();
        assert!((w[0] - c(0.6, 0.8)).norm() < 1e-15);
        assert!(matches!(d2.boundary_distance(&[c(1.0, 0.0), c(0.1, 0.0)]), Err(Error::NotInterior { .. })));
    }

    #[test]
    fn graph_projection_below_origin() {
        let d3 = ModelDomain::finite_graph(2).unwrap();
        let z = [c(0.0, 0.0), c(0.1, -0.01)];
        let w = d3.boundary_project(&z).unwrap();
        assert!(dist(&w, &[c(0.0, 0.0), c(0.1, 0.0)]) < 1e-10);
        assert!((d3.boundary_distance(&z).unwrap() - 0.01).abs() < 1e-6);
    }

    #[test]
    fn projection_is_normal_and_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in ["D3", "D3:3", "D4", "D5"] {
            let d = ModelDomain::parse(name).unwrap();
            for z in d.strip_points(&mut rng, 0.02, 20).unwrap() {
                let w = d.boundary_project(&z).unwrap();
                assert!(d.r_derivs_unchecked(&w).value.abs() < 1e-12);
                let n = d.unit_normal(&w).unwrap();
                let v: Vec<_> = z.iter().zip(&w).map(|(a, b)| a - b).collect();
                let nv = norm(&v);
                let cosang: f64 = v.iter().zip(&n).map(|(a, b)| (a * b.conj()).re).sum::<f64>() / nv;
                assert!((cosang + 1.0).abs() < 1e-10, "{name} {cosang}");
            }
        }
    }

    #[test]
    fn ball_family_has_unit_constant() {
        let d2 = ModelDomain::ball(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = d2.strip_points(&mut rng, 0.1, 50).unwrap();
        let rep = d2.fproperty_check(0.1, &grid).unwrap();
        assert!(rep.pass);
        assert!((rep.best_c - 1.0).abs() < 1e-12);
        assert!(rep.fd_discrepancy < 1e-8, "{}", rep.fd_discrepancy);
        assert!(rep.min_value > -1.0 && rep.max_value < 0.0);
    }

    #[test]
    fn shipped_families_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for name in ["D3", "D3:3", "D4", "D4:3", "D5"] {
            let d = ModelDomain::parse(name).unwrap();
            for delta in [1e-2, 1e-4, 1e-6] {
                let grid = d.strip_points(&mut rng, delta, 200).unwrap();
                let rep = d.fproperty_check(delta, &grid).unwrap();
                assert!(rep.pass, "{name} {delta} {rep:?}");
            }
        }
    }

    #[test]
    fn misplaced_grid_point_is_rejected() {
        let d2 = ModelDomain::ball(2).unwrap();
        let z = vec![c(0.5, 0.0), c(0.0, 0.0)];
        assert!(matches!(d2.fproperty_check(0.1, &[z]), Err(Error::StripViolation { .. })));
    }

    #[test]
    fn boundaries_are_pseudoconvex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for name in ["D1", "D2", "D3", "D3:3", "D4", "D5"] {
            let d = ModelDomain::parse(name).unwrap();
            for w in d.sample_boundary(&mut rng, 100) {
                if d.dim() == 1 {
                    assert!(min_levi_eigenvalue(&d, &w).unwrap() > 0.0);
                    continue;
                }
                let h = crate::levi::complex_hessian(&d, &w).unwrap().matrix;
                for x in tangential_basis(&d, &w).unwrap() {
                    assert!(hermitian_form(&h, &x) >= -1e-10, "{name}");
                }
            }
        }
    }
}
