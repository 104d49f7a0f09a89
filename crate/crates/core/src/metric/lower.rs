//! Closed forms on the disc and the ball, and lower bounds from peak
//! functions.

use num_complex::Complex64;
use serde::Serialize;

use super::disc::AnalyticDisc;
use crate::bumping::{BumpingAssembly, PeakReport};
use crate::domains::{ModelDomain, Shape};
use crate::field::{norm, ScalarField};
use crate::levi::{complex_hessian, hermitian_form};
use crate::quad::solve_increasing;
use crate::{Error, Result};

/// Kobayashi metric of the unit disc or the unit ball.
pub fn exact_metric(domain: &ModelDomain, z: &[Complex64], x: &[Complex64]) -> Result<f64> {
    if !matches!(domain.shape(), Shape::Disc | Shape::Ball { .. }) {
        return Err(Error::UnsupportedDomain(domain.name()));
    }
    if z.len() != domain.dim() || x.len() != z.len() {
        return Err(Error::Usage("point and direction must match the domain dimension".into()));
    }
    let a = 1.0 - norm(z).powi(2);
    if a <= 0.0 {
        return Err(Error::NotInterior { r: -a });
    }
    let xx = norm(x).powi(2);
    let zx: Complex64 = z.iter().zip(x).map(|(zj, xj)| zj.conj() * xj).sum();
    Ok((xx / a + zx.norm_sqr() / (a * a)).sqrt())
}

/// Largest coordinate modulus, the norm the peak-function bound controls.
pub fn max_norm(x: &[Complex64]) -> f64 {
    x.iter().fold(0.0f64, |m, c| m.max(c.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakBound {
    /// `|X| / F₁*(F₂(δ))`.
    pub value: f64,
    /// `F₁*(F₂(δ))`.
    pub inverse: f64,
    /// Whether the convex minorant of `F₁` replaced `F₁`.
    pub convex_repaired: bool,
    /// Largest sampled change `F₁ − minorant`.
    pub repair_change: f64,
}

const CONVEXITY_SAMPLES: usize = 2048;

/// `x_norm / F₁*(F₂(δ))` with `F₁` increasing on `[0, s_max]`, `F₁(0) = 0`.
///
/// Convexity of `F₁` is checked by second differences on a uniform grid; when
/// it fails, the lower convex hull of the samples is inverted instead, which
/// can only lower the bound.
pub fn lower_bound_peak(
    f1: &dyn Fn(f64) -> Result<f64>,
    f2: &dyn Fn(f64) -> Result<f64>,
    delta: f64,
    x_norm: f64,
    s_max: f64,
) -> Result<PeakBound> {
    if !(delta > 0.0 && s_max > 0.0) {
        return Err(Error::Domain { what: "lower_bound_peak", value: delta.min(s_max), floor: 0.0 });
    }
    let y = f2(delta)?;
    let n = CONVEXITY_SAMPLES;
    let s: Vec<f64> = (0..=n).map(|i| s_max * i as f64 / n as f64).collect();
    let v = s.iter().map(|&t| if t == 0.0 { Ok(0.0) } else { f1(t) }).collect::<Result<Vec<f64>>>()?;
    if !(y > 0.0 && y <= v[n]) {
        return Err(Error::OutOfRange { value: y, reason: format!("F2(delta) outside (0, F1({s_max})]") });
    }
    let scale = v[n].abs().max(f64::MIN_POSITIVE);
    let convex = v.windows(3).all(|w| (w[0] - 2.0 * w[1] + w[2]) / scale >= -1e-10);
    let (inverse, convex_repaired, repair_change) = if convex {
        let t = solve_increasing(|t| if t <= 0.0 { Ok(0.0) } else { f1(t) }, y, 0.0, s_max, 1e-15 * s_max)?;
        (t, false, 0.0)
    } else {
        let hull = lower_hull(&s, &v);
        let change = s.iter().zip(&v).map(|(&t, &fv)| fv - eval_hull(&hull, t)).fold(0.0, f64::max);
        (invert_hull(&hull, y), change > 1e-6 * scale, change)
    };
    if !(inverse > 0.0) {
        return Err(Error::OutOfRange { value: y, reason: "F1 inverse is not positive".into() });
    }
    Ok(PeakBound { value: x_norm / inverse, inverse, convex_repaired, repair_change })
}

fn lower_hull(s: &[f64], v: &[f64]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for (&x, &y) in s.iter().zip(v) {
        while hull.len() >= 2 {
            let (x1, y1) = hull[hull.len() - 2];
            let (x2, y2) = hull[hull.len() - 1];
            // drop the middle point when it lies on or above the chord
            if (y2 - y1) * (x - x1) >= (y - y1) * (x2 - x1) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    hull
}

fn eval_hull(hull: &[(f64, f64)], t: f64) -> f64 {
    let i = hull.partition_point(|p| p.0 < t).clamp(1, hull.len() - 1);
    let (x0, y0) = hull[i - 1];
    let (x1, y1) = hull[i];
    y0 + (y1 - y0) * (t - x0) / (x1 - x0)
}

fn invert_hull(hull: &[(f64, f64)], y: f64) -> f64 {
    let i = hull.partition_point(|p| p.1 < y).clamp(1, hull.len() - 1);
    let (x0, y0) = hull[i - 1];
    let (x1, y1) = hull[i];
    x0 + (x1 - x0) * (y - y0) / (y1 - y0)
}

/// The peak-function lower bound for one calibrated assembly:
/// `F₁ = G^η` and `F₂(δ) = c·δ^η` with `c` fitted from the peak checks.
#[derive(Debug, Clone)]
pub struct PeakModel {
    assembly: BumpingAssembly,
    approach_constant: f64,
    s_max: f64,
}

impl PeakModel {
    pub fn new(assembly: BumpingAssembly, approach_constant: f64) -> Result<Self> {
        if !(approach_constant > 0.0 && approach_constant.is_finite()) {
            return Err(Error::Usage(format!("approach constant {approach_constant} must be positive")));
        }
        let mut s_max = 4.0 / assembly.params().gamma;
        // stay inside the tabulated range of G
        while assembly.big_g(s_max).is_err() && s_max > 1e-6 {
            s_max *= 0.9;
        }
        Ok(PeakModel { assembly, approach_constant, s_max })
    }

    /// Uses the largest `sup −ψ_{π(z)}(z)/δ^η` over the given peak reports.
    pub fn from_reports(assembly: BumpingAssembly, reports: &[PeakReport]) -> Result<Self> {
        let c = reports
            .iter()
            .filter_map(|r| r.check("psi_at_projection_vs_distance"))
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max);
        Self::new(assembly, c)
    }

    pub fn assembly(&self) -> &BumpingAssembly {
        &self.assembly
    }

    pub fn approach_constant(&self) -> f64 {
        self.approach_constant
    }

    pub fn f1(&self, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.assembly.big_g(s)?.0.powf(self.assembly.params().eta))
    }

    pub fn f2(&self, delta: f64) -> f64 {
        self.approach_constant * delta.powf(self.assembly.params().eta)
    }

    pub fn peak_bound(&self, delta: f64, x_norm: f64) -> Result<PeakBound> {
        lower_bound_peak(&|s| self.f1(s), &|d| Ok(self.f2(d)), delta, x_norm, self.s_max)
    }

    /// `ĉ = min_δ peak_bound(δ) / g(1/δ)` over the given grid.
    pub fn rate_constant(&self, deltas: &[f64]) -> Result<f64> {
        let rate = self.assembly.domain().declared_rate();
        let mut c = f64::INFINITY;
        for &d in deltas {
            let b = self.peak_bound(d, 1.0)?;
            c = c.min(b.value / rate.g(1.0 / d)?);
        }
        if !c.is_finite() {
            return Err(Error::Usage("empty distance grid for the rate constant".into()));
        }
        Ok(c)
    }
}

/// Log-spaced distances on which `ĉ` is fitted.
pub fn default_rate_grid() -> Vec<f64> {
    (0..=16).map(|i| 10f64.powf(-6.0 + 0.25 * i as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBound {
    pub value: f64,
    pub c_hat: f64,
    pub delta: f64,
}

/// `ĉ · g(1/δ(z)) · |X|_∞`.
pub fn lower_bound_rate(domain: &ModelDomain, c_hat: f64, z: &[Complex64], x: &[Complex64]) -> Result<RateBound> {
    let delta = domain.boundary_distance(z)?;
    let g = domain.declared_rate().g(1.0 / delta)?;
    Ok(RateBound { value: c_hat * g * max_norm(x), c_hat, delta })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanValueReport {
    pub center_value: f64,
    pub circle_average: f64,
    /// `average − ψ(g(0))`, nonnegative for subharmonic `ψ ∘ g`.
    pub sub_mean_gap: f64,
    /// Per coordinate, `avg F₁(|g_j − w_j|) − F₁(avg |g_j − w_j|)`.
    pub jensen_gaps: Vec<f64>,
    /// Smallest sampled `Δ(ψ ∘ g)`.
    pub min_laplacian: f64,
    pub subharmonic: bool,
    pub pass: bool,
}

/// Checks the sub-mean-value inequality of `ψ ∘ g` on the circle `|ζ| = s`
/// with an `n`-point trapezoid rule, and Jensen's inequality for `F₁` applied
/// to `|g_j − w_j|`.
pub fn mean_value_check(
    psi: &dyn ScalarField,
    disc: &AnalyticDisc,
    n: usize,
    jensen: Option<(&dyn Fn(f64) -> Result<f64>, &[Complex64])>,
    tol: f64,
) -> Result<MeanValueReport> {
    if n < 8 {
        return Err(Error::Evaluation(format!("{n} quadrature nodes are too few")));
    }
    let nodes: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(disc.scale, std::f64::consts::TAU * k as f64 / n as f64))
        .collect();
    let center_value = psi.value(disc.center())?;
    let mut sum = 0.0;
    for zeta in &nodes {
        sum += psi.value(&disc.eval(*zeta))?;
    }
    let circle_average = sum / n as f64;
    if !circle_average.is_finite() {
        return Err(Error::Evaluation("non-finite circle average".into()));
    }

    let mut jensen_gaps = Vec::new();
    if let Some((f1, w)) = jensen {
        for j in 0..disc.dim() {
            let d: Vec<f64> = nodes.iter().map(|z| (disc.eval(*z)[j] - w[j]).norm()).collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let mut avg_f = 0.0;
            for &v in &d {
                avg_f += f1(v)?;
            }
            jensen_gaps.push(avg_f / n as f64 - f1(mean)?);
        }
    }

    // Δ(ψ ∘ g)(ζ) = 4 H_ψ(g(ζ))(g'(ζ), g'(ζ))
    let mut min_laplacian = f64::INFINITY;
    let mut lap_scale = 0.0f64;
    for k in 0..9 {
        let zeta = if k == 0 { Complex64::new(0.0, 0.0) } else { Complex64::from_polar(0.5 * disc.scale, k as f64 * 0.25 * std::f64::consts::PI) };
        let h = complex_hessian(psi, &disc.eval(zeta))?;
        let lap = 4.0 * hermitian_form(&h.matrix, &derivative(disc, zeta));
        min_laplacian = min_laplacian.min(lap);
        lap_scale = lap_scale.max(lap.abs());
    }
    let value_scale = center_value.abs().max(circle_average.abs()).max(1.0);
    // finite-difference Hessians carry noise of order 1e−7 relative to |ψ|/s²
    let lap_floor = tol.max(1e-5) * lap_scale.max(value_scale / (disc.scale * disc.scale));
    let subharmonic = min_laplacian >= -lap_floor;
    let sub_mean_gap = circle_average - center_value;
    let pass = subharmonic && sub_mean_gap >= -tol * value_scale && jensen_gaps.iter().all(|g| *g >= -tol);
    Ok(MeanValueReport { center_value, circle_average, sub_mean_gap, jensen_gaps, min_laplacian, subharmonic, pass })
}

fn derivative(disc: &AnalyticDisc, zeta: Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); disc.dim()];
    for (k, c) in disc.coeffs.iter().enumerate().skip(1).rev() {
        for (o, ck) in out.iter_mut().zip(c) {
            *o = *o * zeta + ck * k as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exact_metric_closed_forms() {
        let d1 = ModelDomain::disc();
        assert!((exact_metric(&d1, &[c(0.5, 0.0)], &[c(1.0, 0.0)]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let d2 = ModelDomain::ball(2).unwrap();
        let z = [c(0.5, 0.0), c(0.0, 0.0)];
        assert!((exact_metric(&d2, &z, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((exact_metric(&d2, &z, &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap() - 1.0 / 0.75f64.sqrt()).abs() < 1e-15);
        let x = [c(0.6, 0.0), c(0.0, 0.8)];
        assert!((exact_metric(&d2, &[c(0.0, 0.0); 2], &x).unwrap() - 1.0).abs() < 1e-15);
        let d3 = ModelDomain::finite_graph(2).unwrap();
        assert!(matches!(exact_metric(&d3, &[c(0.0, 0.1); 2], &x), Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn peak_bound_explicit_inverses() {
        let b = lower_bound_peak(&|s| Ok(s * s), &|d| Ok(d), 0.01, 1.0, 1.0).unwrap();
        assert!((b.value - 10.0).abs() < 1e-9 && !b.convex_repaired);
        let b = lower_bound_peak(&|s| Ok(s), &|d| Ok(d), 0.01, 1.0, 1.0).unwrap();
        assert!((b.value - 100.0).abs() < 1e-9);
        assert!(lower_bound_peak(&|s| Ok(s), &|d| Ok(d), 2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn concave_profile_is_replaced_by_its_chord() {
        // the convex minorant of √s on [0, 1] is s
        let b = lower_bound_peak(&|s| Ok(s.sqrt()), &|d| Ok(d), 0.25, 1.0, 1.0).unwrap();
        assert!(b.convex_repaired);
        assert!((b.inverse - 0.25).abs() < 1e-12);
        assert!((b.repair_change - 0.25).abs() < 1e-3);
    }

    #[test]
    fn mean_value_examples() {
        let disc = AnalyticDisc::linear(&[c(0.0, 0.0)], &[c(1.0, 0.0)], 1.0);
        let harmonic = FnField::new(1, |z: &[Complex64]| z[0].re - 1.0);
        let r = mean_value_check(&harmonic, &disc, 64, None, 1e-10).unwrap();
        assert!(r.sub_mean_gap.abs() < 1e-10 && r.pass, "{r:?}");
        let sq = FnField::new(1, |z: &[Complex64]| z[0].norm_sqr() - 1.0);
        let f1 = |s: f64| Ok(s * s);
        let r = mean_value_check(&sq, &disc, 64, Some((&f1, &[c(0.0, 0.0)])), 1e-10).unwrap();
        assert!((r.sub_mean_gap - 1.0).abs() < 1e-12);
        assert!(r.jensen_gaps[0].abs() < 1e-12 && r.pass);
        assert!((r.min_laplacian - 4.0).abs() < 1e-4);
        assert!(mean_value_check(&sq, &disc, 4, None, 1e-10).is_err());
    }

    #[test]
    fn superharmonic_function_fails() {
        let disc = AnalyticDisc::linear(&[c(0.0, 0.0)], &[c(0.5, 0.0)], 1.0);
        let f = FnField::new(1, |z: &[Complex64]| -z[0].norm_sqr());
        let r = mean_value_check(&f, &disc, 64, None, 1e-10).unwrap();
        assert!(!r.pass && !r.subharmonic && r.sub_mean_gap < 0.0);
    }
}
