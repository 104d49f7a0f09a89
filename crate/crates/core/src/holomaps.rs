//! Hölder-type extension rates for holomorphic maps: the rate algebra, the
//! one-dimensional Hardy–Littlewood extremal, and sampled moduli of
//! continuity of explicit maps.

use std::cell::RefCell;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domains::ModelDomain;
use crate::field::{dist, norm, Point};
use crate::metric::{exact_metric, kobayashi_upper, UpperOptions};
use crate::quad::{integrate_half_line, QuadOptions};
use crate::rates::{hl_integral, DeltaFunction, RateFunction, RateSpec};
use crate::{Error, Result};

/// Predicted extension rate `h(t) = η f̃(t^η)` for a target rate `f` and a
/// source exponent `η`.
#[derive(Debug, Clone)]
pub struct HolderRateSpec {
    pub rate: RateFunction,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderRateRow {
    pub t: f64,
    pub h: f64,
    /// `h` from the defining integral, for comparison.
    pub h_direct: f64,
}

impl HolderRateSpec {
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.rate.holder_rate_h(self.eta, t)
    }

    pub fn table(&self, ts: &[f64]) -> Result<Vec<HolderRateRow>> {
        ts.iter()
            .map(|&t| {
                let h = self.eval(t)?;
                let (_, h_direct) = self.rate.holder_rate_paths(self.eta, t)?;
                Ok(HolderRateRow { t, h, h_direct })
            })
            .collect()
    }

    pub fn rate_spec(&self) -> RateSpec {
        self.rate.spec()
    }
}

/// Validates `f` and `η` by evaluating `h` once above the floor of `f`.
pub fn predicted_rate(f: &RateFunction, eta: f64) -> Result<HolderRateSpec> {
    let spec = HolderRateSpec { rate: f.clone(), eta };
    let t = (f.t0().max(1.0) * 10.0).powf(1.0 / eta);
    spec.eval(t)?;
    Ok(spec)
}

/// `(h(t))⁻¹` computed twice: as the iterated integral
/// `∫_{t^η}^∞ (1/b) ∫_b^∞ da/(a f(a)) db` and in the swapped form
/// `∫_{t^η}^∞ (ln a − ln t^η)/(a f(a)) da`.
pub fn fubini_paths(f: &RateFunction, eta: f64, t: f64) -> Result<(f64, f64)> {
    let s = eta * t.ln();
    let swapped = f.weighted_tail_integral_log(s)?.0;
    let inner_err = RefCell::new(None);
    let opts = QuadOptions { rel_tol: 1e-10, ..Default::default() };
    let iterated = integrate_half_line(
        |u| match f.tail_integral_log(s + u) {
            Ok((v, _)) => v,
            Err(e) => {
                inner_err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        s.abs().max(1.0),
        opts,
    )?;
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    Ok((iterated.value, swapped))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardyLittlewoodReport {
    pub interval: (f64, f64),
    pub pairs: usize,
    /// `sup f(1/|h|)·|u(x+h) − u(x)|` with `f(1/d) = (∫₀^d G/s ds)⁻¹`.
    pub c_fit: f64,
    pub witness: (f64, f64),
    /// Largest relative gap between a difference quotient of `u` and `G(δ)/δ`.
    pub saturation_error: f64,
}

/// Builds `u(x) = ∫₀^{δ(x)} G(s)/s ds` on `(a, b)`, where `δ` is the
/// distance to the endpoints, and measures its modulus of continuity against
/// the Hardy–Littlewood rate of `G`.
pub fn verify_hardy_littlewood<G: DeltaFunction + ?Sized>(
    big_g: &G,
    interval: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<HardyLittlewoodReport> {
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::Usage(format!("empty interval ({a}, {b})")));
    }
    let half = 0.5 * (b - a);
    // fails here for non-integrable or non-monotone G
    hl_integral(big_g, half)?;
    let u_of_delta = |d: f64| -> Result<f64> { if d <= 0.0 { Ok(0.0) } else { hl_integral(big_g, d) } };
    let delta = |x: f64| (x - a).min(b - x).max(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_fit = 0.0f64;
    let mut witness = (a, a);
    let mut pairs = 0;
    for _ in 0..n_samples.max(1) {
        // distances to the nearer endpoint log-uniform in [1e−8, 1]·half
        let near = half * 10f64.powf(-8.0 * rng.gen::<f64>());
        let x = if rng.gen::<bool>() { a + near } else { b - near };
        let h = (b - a) * 10f64.powf(-8.0 * rng.gen::<f64>());
        let y = if rng.gen::<bool>() { x + h } else { x - h };
        if !(y > a && y < b) {
            continue;
        }
        let du = (u_of_delta(delta(x))? - u_of_delta(delta(y))?).abs();
        let ratio = du / u_of_delta((y - x).abs().min(half))?.max(f64::MIN_POSITIVE);
        pairs += 1;
        if ratio > c_fit {
            c_fit = ratio;
            witness = (x, y);
        }
    }

    // d/dδ ∫₀^δ G/s ds = G(δ)/δ
    let mut saturation_error = 0.0f64;
    for k in 1..=16 {
        let d = half * 10f64.powf(-6.0 * k as f64 / 16.0);
        let step = 1e-4 * d;
        let fd = (u_of_delta(d + step)? - u_of_delta(d - step)?) / (2.0 * step);
        let exact = big_g.eval(d) / d;
        saturation_error = saturation_error.max((fd - exact).abs() / exact);
    }
    Ok(HardyLittlewoodReport { interval, pairs, c_fit, witness, saturation_error })
}

/// Model profiles `G(δ)` for the Hardy–Littlewood check, evaluated from
/// `ln δ` so that the behaviour at `δ → 0` survives underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GProfile {
    /// `δ^p`
    Power { p: f64 },
    /// `(1 − ln δ)^{−p}`
    InverseLog { p: f64 },
}

impl GProfile {
    /// Parses `power:P` or `invlog:P`.
    pub fn parse(text: &str) -> Result<Self> {
        let (name, arg) = text
            .split_once(':')
            .ok_or_else(|| Error::Usage(format!("profile `{text}` must look like power:0.5 or invlog:2")))?;
        let p = arg.trim().parse::<f64>().map_err(|_| Error::Usage(format!("`{arg}` is not a number")))?;
        if !(p > 0.0) {
            return Err(Error::Usage("profile exponent must be positive".into()));
        }
        match name {
            "power" => Ok(GProfile::Power { p }),
            "invlog" => Ok(GProfile::InverseLog { p }),
            other => Err(Error::Usage(format!("unknown profile `{other}`"))),
        }
    }
}

impl DeltaFunction for GProfile {
    fn eval(&self, delta: f64) -> f64 {
        self.eval_ln(delta.ln())
    }

    fn eval_ln(&self, ln_delta: f64) -> f64 {
        match *self {
            GProfile::Power { p } => (p * ln_delta).exp(),
            GProfile::InverseLog { p } => (1.0 - ln_delta).powf(-p),
        }
    }
}

/// Shipped holomorphic maps, each with its source domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoloMap {
    /// Identity on the ball in `ℂⁿ`.
    Identity { n: usize },
    /// `z (z − a) / (1 − āz)` on the disc.
    Blaschke { a_re: f64, a_im: f64 },
    /// `z²` on the disc.
    Square,
}

impl HoloMap {
    pub fn parse(text: &str) -> Result<Self> {
        let (name, arg) = text.split_once(':').map_or((text, None), |(n, a)| (n, Some(a)));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Usage(format!("`{s}` is not a number")));
        match name {
            "identity" => Ok(HoloMap::Identity { n: arg.map_or(Ok(2.0), num)? as usize }),
            "blaschke" => {
                let a = arg.map_or(Ok(0.5), num)?;
                if !(a.abs() < 1.0) {
                    return Err(Error::Usage("Blaschke zero must lie in the open disc".into()));
                }
                Ok(HoloMap::Blaschke { a_re: a, a_im: 0.0 })
            }
            "square" => Ok(HoloMap::Square),
            other => Err(Error::Usage(format!("unknown map `{other}` (identity[:n], blaschke[:a], square)"))),
        }
    }

    pub fn source(&self) -> ModelDomain {
        match *self {
            HoloMap::Identity { n } if n >= 2 => ModelDomain::ball(n).expect("n ≥ 2"),
            _ => ModelDomain::disc(),
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Point {
        match *self {
            HoloMap::Identity { .. } => z.to_vec(),
            HoloMap::Blaschke { a_re, a_im } => {
                let a = Complex64::new(a_re, a_im);
                vec![z[0] * (z[0] - a) / (1.0 - a.conj() * z[0])]
            }
            HoloMap::Square => vec![z[0] * z[0]],
        }
    }

    /// `Ψ'(z) X`.
    pub fn push_forward(&self, z: &[Complex64], x: &[Complex64]) -> Point {
        match *self {
            HoloMap::Identity { .. } => x.to_vec(),
            HoloMap::Blaschke { a_re, a_im } => {
                let a = Complex64::new(a_re, a_im);
                let w = z[0];
                let den = 1.0 - a.conj() * w;
                let d = ((2.0 * w - a) * den + a.conj() * (w * w - a * w)) / (den * den);
                vec![d * x[0]]
            }
            HoloMap::Square => vec![2.0 * z[0] * x[0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusPair {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub image_gap: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusReport {
    pub map: HoloMap,
    pub eta: f64,
    pub pairs: Vec<ModulusPair>,
    /// `sup f̃(|z−w|^{−η})·|Ψ(z)−Ψ(w)|` over pairs where `f̃` is defined.
    pub predicted_constant: f64,
    /// Pairs skipped because `|z−w|^{−η}` lies below the floor of `f̃`.
    pub skipped: usize,
    /// Power-law fit `|Ψ(z)−Ψ(w)| ≤ C|z−w|^α` to the upper envelope.
    pub holder_exponent: f64,
    pub holder_constant: f64,
    /// Whether the power law gives the smaller modulus at the smallest gap.
    pub holder_sharper: bool,
}

/// Samples pairs `(z, w)` in the closed source domain concentrated near the
/// boundary, with `|z − w|` log-spaced down to `1e−5`, and fits the constant
/// of the predicted modulus `1/f̃(|z−w|^{−η})`.
pub fn measure_modulus(map: HoloMap, rate: &HolderRateSpec, budget: usize, seed: u64) -> Result<ModulusReport> {
    let d = map.source();
    let n = d.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(budget);
    for k in 0..budget.max(2) {
        let dir = random_unit(&mut rng, n);
        let depth = 10f64.powf(-5.0 * rng.gen::<f64>());
        let z: Point = dir.iter().map(|c| c * (1.0 - depth)).collect();
        let gap = 10f64.powf(-5.0 * k as f64 / (budget.max(2) - 1) as f64);
        let v = random_unit(&mut rng, n);
        let mut w: Point = z.iter().zip(&v).map(|(a, b)| a + b * gap).collect();
        let wn = norm(&w);
        if wn > 1.0 {
            w.iter_mut().for_each(|c| *c /= wn);
        }
        let gap = dist(&z, &w);
        if gap > 0.0 {
            pairs.push(pair(map, &z, &w));
        }
    }
    Ok(fit_modulus(map, rate, pairs))
}

fn pair(map: HoloMap, z: &[Complex64], w: &[Complex64]) -> ModulusPair {
    let flat = |p: &[Complex64]| p.iter().flat_map(|c| [c.re, c.im]).collect::<Vec<f64>>();
    ModulusPair { z: flat(z), w: flat(w), image_gap: dist(&map.eval(z), &map.eval(w)), gap: dist(z, w) }
}

/// Fits both moduli to an arbitrary pair set. The suprema do not depend on
/// the order of the pairs.
pub fn fit_modulus(map: HoloMap, rate: &HolderRateSpec, pairs: Vec<ModulusPair>) -> ModulusReport {
    let mut predicted_constant = 0.0f64;
    let mut skipped = 0;
    for p in &pairs {
        match rate.rate.f_tilde(p.gap.powf(-rate.eta)) {
            Ok(ft) => predicted_constant = predicted_constant.max(ft * p.image_gap),
            Err(_) => skipped += 1,
        }
    }
    // upper envelope per half-decade of the gap, then a least-squares slope
    let mut bins: Vec<(f64, f64)> = Vec::new();
    for p in pairs.iter().filter(|p| p.image_gap > 0.0) {
        let key = (p.gap.log10() * 2.0).floor();
        match bins.iter_mut().find(|b| b.0 == key) {
            Some(b) => b.1 = b.1.max(p.image_gap / p.gap),
            None => bins.push((key, p.image_gap / p.gap)),
        }
    }
    let holder_exponent = if bins.len() >= 2 {
        let xs: Vec<f64> = bins.iter().map(|b| b.0 / 2.0).collect();
        let ys: Vec<f64> = bins.iter().map(|b| b.1.log10()).collect();
        (1.0 + slope(&xs, &ys)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let holder_constant = pairs
        .iter()
        .map(|p| p.image_gap / p.gap.powf(holder_exponent))
        .fold(0.0, f64::max);
    let holder_sharper = pairs
        .iter()
        .map(|p| p.gap)
        .min_by(f64::total_cmp)
        .and_then(|g| rate.rate.f_tilde(g.powf(-rate.eta)).ok().map(|ft| (g, ft)))
        .is_some_and(|(g, ft)| holder_constant * g.powf(holder_exponent) < predicted_constant / ft);
    ModulusReport { map, eta: rate.eta, pairs, predicted_constant, skipped, holder_exponent, holder_constant, holder_sharper }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx > 0.0 { sxy / sxx } else { 0.0 }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Point {
    loop {
        let p: Point = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let r = norm(&p);
        if r > 1e-3 && r <= 1.0 {
            return p.iter().map(|c| c / r).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchwarzPickCheck {
    /// `K(Ψ(z), Ψ'(z)X)` on the target.
    pub image: f64,
    /// `K(z, X)` on the source.
    pub source_exact: f64,
    /// Disc upper bound for `K(z, X)`.
    pub source_upper: f64,
    pub holds: bool,
}

/// Distance decrease `K(Ψ(z), Ψ'(z)X) ≤ K(z, X)` with both sides computed.
pub fn schwarz_pick_check(map: HoloMap, z: &[Complex64], x: &[Complex64], opts: &UpperOptions) -> Result<SchwarzPickCheck> {
    let d = map.source();
    let fz = map.eval(z);
    let target = d.clone();
    let image = exact_metric(&target, &fz, &map.push_forward(z, x))?;
    let source_exact = exact_metric(&d, z, x)?;
    let source_upper = kobayashi_upper(&d, z, x, opts)?.value;
    let holds = image <= source_exact * (1.0 + 1e-12) && image <= source_upper * (1.0 + 1e-12);
    Ok(SchwarzPickCheck { image, source_exact, source_upper, holds })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn predicted_rate_examples() {
        let h = predicted_rate(&RateFunction::power(0.5).unwrap(), 0.5).unwrap();
        for t in [16.0, 1e4, 1e8] {
            assert!(rel(h.eval(t).unwrap(), t.powf(0.25) / 8.0) < 1e-8);
        }
        let eps: f64 = 0.3;
        let h = predicted_rate(&RateFunction::power(eps).unwrap(), 1.0).unwrap();
        assert!(rel(h.eval(100.0).unwrap(), eps * eps * 100f64.powf(eps)) < 1e-8);
        let log2 = RateFunction::log_power(2.0).unwrap();
        assert!(matches!(predicted_rate(&log2, 0.7), Err(Error::Divergent(_))));
    }

    #[test]
    fn fubini_forms_agree() {
        for eps in [0.25, 0.5, 0.9] {
            let f = RateFunction::power(eps).unwrap();
            for t in [10.0, 1e2, 1e3, 1e4] {
                let (a, b) = fubini_paths(&f, 0.5, t).unwrap();
                assert!(rel(a, b) < 1e-5, "{eps} {t}: {a} {b}");
            }
        }
    }

    #[test]
    fn hardy_littlewood_square_root() {
        let rep = verify_hardy_littlewood(&GProfile::Power { p: 0.5 }, (0.0, 1.0), 400, 1).unwrap();
        assert!(rep.c_fit <= 1.0 + 1e-6 && rep.c_fit > 0.5, "{rep:?}");
        assert!(rep.saturation_error < 1e-6);
        // differences at h = 1e−8 next to x ~ 1/2 carry relative rounding ~1e−8
        let rep = verify_hardy_littlewood(&GProfile::Power { p: 1.0 }, (0.0, 1.0), 400, 1).unwrap();
        assert!(rep.c_fit <= 1.0 + 1e-6, "{rep:?}");
    }

    #[test]
    fn hardy_littlewood_log_types() {
        // G/δ is decreasing only for δ < 1/e
        let g = GProfile::parse("invlog:2").unwrap();
        assert!(matches!(verify_hardy_littlewood(&g, (0.0, 1.0), 10, 2), Err(Error::Monotonicity(_))));
        let rep = verify_hardy_littlewood(&g, (0.0, 0.5), 200, 2).unwrap();
        assert!(rep.c_fit.is_finite() && rep.c_fit <= 2.0, "{rep:?}");
        assert!(rep.saturation_error < 1e-6, "{rep:?}");
        let r = verify_hardy_littlewood(&GProfile::InverseLog { p: 1.0 }, (0.0, 0.5), 10, 2);
        assert!(matches!(r, Err(Error::Divergent(_))), "{r:?}");
    }

    #[test]
    fn blaschke_derivative_matches_difference() {
        let m = HoloMap::parse("blaschke:0.5").unwrap();
        let z = [Complex64::new(0.3, -0.4)];
        let h = 1e-6;
        let fd = (m.eval(&[z[0] + h])[0] - m.eval(&[z[0] - h])[0]) / (2.0 * h);
        let an = m.push_forward(&z, &[Complex64::new(1.0, 0.0)])[0];
        assert!((fd - an).norm() < 1e-8);
    }

    #[test]
    fn schwarz_pick_holds_for_shipped_maps() {
        let opts = UpperOptions { degree: 1, ..Default::default() };
        for m in [HoloMap::Square, HoloMap::parse("blaschke:0.5").unwrap()] {
            let c = schwarz_pick_check(m, &[Complex64::new(0.4, 0.3)], &[Complex64::new(1.0, 0.0)], &opts).unwrap();
            assert!(c.holds && c.image < c.source_exact, "{c:?}");
        }
        let z = [Complex64::new(0.4, 0.3), Complex64::new(0.0, 0.2)];
        let x = [Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)];
        let c = schwarz_pick_check(HoloMap::Identity { n: 2 }, &z, &x, &opts).unwrap();
        assert!(c.holds && rel(c.image, c.source_exact) < 1e-15);
    }
}
