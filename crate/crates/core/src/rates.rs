//! Scalar calculus of growth functions.
//!
//! A rate `f` induces
//!
//! * `g(t) = (∫_t^∞ da / (a f(a)))⁻¹`,
//! * its inverse `g*`,
//! * `G(δ) = 1 / g*((γδ)⁻¹)`,
//! * `f̃(t) = (∫_t^∞ (ln a − ln t) da / (a f(a)))⁻¹`,
//! * the Hölder rate `h(t) = η f̃(t^η)`.
//!
//! Everything is evaluated in the logarithmic variable `s = ln t`. After the
//! substitution `a = t eᵘ` the integrals become `∫₀^∞ du / F(s + u)` and
//! `∫₀^∞ u du / F(s + u)` with `F(s) = f(eˢ)`, which stay representable even
//! when `t` itself would overflow (logarithmic rates push `g*` to `e^{10⁶}`).
//! `G` is handled through `ℓ(δ) = ln G(δ) = −ln g*((γδ)⁻¹)`.

use crate::error::{Error, Result};
use crate::quad::{integrate_half_line, solve_increasing, QuadOptions};
use serde::{Deserialize, Serialize};

/// Parametric family of a rate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum RateFamily {
    /// `f(t) = t^eps`
    Power { eps: f64 },
    /// `f(t) = (ln t)^beta`
    LogPower { beta: f64 },
    /// Sampled `(t, f(t))` pairs, monotone cubic in log–log coordinates,
    /// continued as `f ∝ t^tail_exponent` past the last sample.
    Tabulated { samples: Vec<(f64, f64)>, tail_exponent: f64 },
}

/// Configuration record for a rate function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    #[serde(flatten)]
    pub family: RateFamily,
    #[serde(default)]
    pub t0: Option<f64>,
}

/// Monotone piecewise-cubic (Fritsch–Carlson) interpolant.
#[derive(Debug, Clone, PartialEq)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
        } else {
            for i in 1..n - 1 {
                if del[i - 1] * del[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], del[0], del[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Pchip { x, y, d }
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        let i = match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.d[i], self.d[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let v = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let dh00 = 6.0 * s * s - 6.0 * s;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * s * s - 2.0 * s;
        let dv = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
        (v, dv)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// A monotone growth function `f : [t₀, ∞) → [1, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    family: RateFamily,
    t0: f64,
    log_table: Option<Pchip>,
    quad: QuadOptions,
}

impl RateFunction {
    pub fn power(eps: f64) -> Result<Self> {
        Self::new(RateFamily::Power { eps }, None)
    }

    pub fn log_power(beta: f64) -> Result<Self> {
        Self::new(RateFamily::LogPower { beta }, None)
    }

    pub fn from_spec(spec: &RateSpec) -> Result<Self> {
        Self::new(spec.family.clone(), spec.t0)
    }

    pub fn new(family: RateFamily, t0: Option<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::Usage(msg));
        let mut log_table = None;
        let default_t0 = match &family {
            RateFamily::Power { eps } => {
                if !(*eps > 0.0 && eps.is_finite()) {
                    return bad(format!("power exponent must be positive, got {eps}"));
                }
                1.0
            }
            RateFamily::LogPower { beta } => {
                if !(*beta > 0.0 && beta.is_finite()) {
                    return bad(format!("log-power exponent must be positive, got {beta}"));
                }
                // f(t) >= 1 requires ln t >= 1
                std::f64::consts::E
            }
            RateFamily::Tabulated { samples, tail_exponent } => {
                if samples.len() < 2 {
                    return bad("tabulated rate needs at least two samples".into());
                }
                if !(*tail_exponent > 0.0) {
                    return bad("tabulated rate needs a positive declared tail exponent".into());
                }
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return bad("tabulated samples must have increasing t and nondecreasing f".into());
                    }
                }
                if samples[0].0 <= 0.0 || samples[0].1 < 1.0 {
                    return bad("tabulated samples need t > 0 and f >= 1".into());
                }
                let xs = samples.iter().map(|p| p.0.ln()).collect();
                let ys = samples.iter().map(|p| p.1.ln()).collect();
                log_table = Some(Pchip::new(xs, ys));
                samples[0].0.max(1.0)
            }
        };
        let t0 = t0.unwrap_or(default_t0);
        if !(t0 >= 1.0) {
            return bad(format!("domain floor t0 must be at least 1, got {t0}"));
        }
        if let RateFamily::Tabulated { samples, .. } = &family {
            if t0 < samples[0].0 {
                return bad("t0 lies below the first tabulated sample".into());
            }
        }
        if let RateFamily::LogPower { .. } = family {
            if t0 <= 1.0 {
                return bad("log-power rates need t0 > 1".into());
            }
        }
        Ok(RateFunction { family, t0, log_table, quad: QuadOptions::default() })
    }

    /// Parses `power:EPS`, `logpower:BETA`, optionally suffixed `@T0`.
    pub fn parse(text: &str) -> Result<Self> {
        let (body, t0) = match text.split_once('@') {
            Some((b, t)) => (b, Some(parse_f64(t)?)),
            None => (text, None),
        };
        let (name, param) = body
            .split_once(':')
            .ok_or_else(|| Error::Usage(format!("rate `{text}` must look like power:0.5")))?;
        let p = parse_f64(param)?;
        match name {
            "power" => Self::new(RateFamily::Power { eps: p }, t0),
            "logpower" | "log" => Self::new(RateFamily::LogPower { beta: p }, t0),
            other => Err(Error::Usage(format!("unknown rate family `{other}`"))),
        }
    }

    pub fn spec(&self) -> RateSpec {
        RateSpec { family: self.family.clone(), t0: Some(self.t0) }
    }

    pub fn family(&self) -> &RateFamily {
        &self.family
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn with_quadrature(mut self, quad: QuadOptions) -> Self {
        self.quad = quad;
        self
    }

    /// `F(s) = f(eˢ)`.
    pub fn eval_log(&self, s: f64) -> f64 {
        match &self.family {
            RateFamily::Power { eps } => (eps * s).exp(),
            RateFamily::LogPower { beta } => s.max(0.0).powf(*beta),
            RateFamily::Tabulated { tail_exponent, .. } => {
                let tab = self.log_table.as_ref().expect("tabulated rate keeps its table");
                let last = *tab.x.last().unwrap();
                if s > last {
                    (tab.y.last().unwrap() + tail_exponent * (s - last)).exp()
                } else {
                    tab.eval(s).0.exp()
                }
            }
        }
    }

    /// `d ln F / ds = t f'(t) / f(t)`.
    pub fn log_slope(&self, s: f64) -> f64 {
        match &self.family {
            RateFamily::Power { eps } => *eps,
            RateFamily::LogPower { beta } => beta / s,
            RateFamily::Tabulated { tail_exponent, .. } => {
                let tab = self.log_table.as_ref().expect("tabulated rate keeps its table");
                if s > *tab.x.last().unwrap() {
                    *tail_exponent
                } else {
                    tab.eval(s).1
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= self.t0) {
            return Err(Error::Domain { what: "f", value: t, floor: self.t0 });
        }
        Ok(self.eval_log(t.ln()))
    }

    /// Whether `∫^∞ da/(a f(a))` converges.
    pub fn g_integrable(&self) -> bool {
        match &self.family {
            RateFamily::LogPower { beta } => *beta > 1.0,
            _ => true,
        }
    }

    /// Whether `∫^∞ ln a da/(a f(a))` converges.
    pub fn f_tilde_integrable(&self) -> bool {
        match &self.family {
            RateFamily::LogPower { beta } => *beta > 2.0,
            _ => true,
        }
    }

    /// `(f(t) ≤ √t, f(t) ≤ t)` on a log grid up to `10¹²`.
    pub fn caps(&self) -> (bool, bool) {
        let mut sqrt_cap = true;
        let mut lin_cap = true;
        let s0 = self.t0.ln();
        for k in 0..=240 {
            let s = s0 + (12.0 * std::f64::consts::LN_10 - s0).max(1.0) * k as f64 / 240.0;
            let f = self.eval_log(s);
            sqrt_cap &= f <= (0.5 * s).exp() * (1.0 + 1e-12);
            lin_cap &= f <= s.exp() * (1.0 + 1e-12);
        }
        (sqrt_cap, lin_cap)
    }

    fn split_point(&self, s: f64) -> f64 {
        let k = self.log_slope(s.max(1e-300)).abs();
        let decay = if k > 0.0 { 1.0 / k } else { 1.0 };
        1f64.max(s.abs()).max(decay.min(1e6))
    }

    fn check_log_floor(&self, s: f64, what: &'static str) -> Result<()> {
        if !(s > self.t0.ln()) && !(s == self.t0.ln() && self.t0 > 1.0) {
            return Err(Error::Domain { what, value: s.exp(), floor: self.t0 });
        }
        Ok(())
    }

    /// `∫_t^∞ da/(a f(a))` at `t = eˢ`, with its quadrature error estimate.
    pub fn tail_integral_log(&self, s: f64) -> Result<(f64, f64)> {
        if !self.g_integrable() {
            return Err(Error::Divergent(format!(
                "∫ da/(a f(a)) diverges for {:?}",
                self.family
            )));
        }
        let r = integrate_half_line(|u| 1.0 / self.eval_log(s + u), self.split_point(s), self.quad)?;
        Ok((r.value, r.error))
    }

    /// `ln g(eˢ)`-free form: returns `g(eˢ)`.
    pub fn g_log(&self, s: f64) -> Result<f64> {
        self.check_log_floor(s, "g")?;
        Ok(1.0 / self.tail_integral_log(s)?.0)
    }

    /// `g(t)` for `t > t₀`.
    pub fn g(&self, t: f64) -> Result<f64> {
        if !(t > self.t0) {
            return Err(Error::Domain { what: "g", value: t, floor: self.t0 });
        }
        self.g_log(t.ln())
    }

    /// `ln g*(y)`: the `s` with `g(eˢ) = y`.
    pub fn g_star_log(&self, y: f64) -> Result<f64> {
        let s0 = self.t0.ln();
        let g0 = 1.0 / self.tail_integral_log(s0)?.0;
        if !(y >= g0) {
            return Err(Error::OutOfRange {
                value: y,
                reason: format!("below g(t0) = {g0}"),
            });
        }
        let eval = |s: f64| -> Result<f64> { Ok(1.0 / self.tail_integral_log(s)?.0) };
        let mut step = 1.0;
        let mut hi = s0 + step;
        while eval(hi)? < y {
            step *= 2.0;
            hi = s0 + step;
            if step > 1e13 {
                return Err(Error::OutOfRange {
                    value: y,
                    reason: "bracketing exceeded ln t = 1e13".into(),
                });
            }
        }
        let lo = if step > 1.0 { s0 + 0.5 * step } else { s0 };
        solve_increasing(eval, y, lo, hi, 4e-16 * hi.abs().max(1.0))
    }

    /// `g*(y)`; may overflow to `+∞` for logarithmic rates, use
    /// [`RateFunction::g_star_log`] there.
    pub fn g_star(&self, y: f64) -> Result<f64> {
        Ok(self.g_star_log(y)?.exp())
    }

    /// `ln G(δ)`.
    pub fn log_big_g(&self, gamma: f64, delta: f64) -> Result<f64> {
        if !(gamma > 0.0 && delta > 0.0) {
            return Err(Error::Domain { what: "G", value: delta, floor: 0.0 });
        }
        Ok(-self.g_star_log(1.0 / (gamma * delta))?)
    }

    /// `G(δ) = 1 / g*((γδ)⁻¹)`.
    pub fn big_g(&self, gamma: f64, delta: f64) -> Result<f64> {
        Ok(self.log_big_g(gamma, delta)?.exp())
    }

    /// `(f̃(eˢ))⁻¹ = ∫₀^∞ u du / F(s + u)` with error estimate.
    pub fn weighted_tail_integral_log(&self, s: f64) -> Result<(f64, f64)> {
        if !self.f_tilde_integrable() {
            return Err(Error::Divergent(format!(
                "∫ (ln a − ln t) da/(a f(a)) diverges for {:?}",
                self.family
            )));
        }
        let r = integrate_half_line(|u| u / self.eval_log(s + u), self.split_point(s), self.quad)?;
        Ok((r.value, r.error))
    }

    pub fn f_tilde_log(&self, s: f64) -> Result<f64> {
        self.check_log_floor(s, "f_tilde")?;
        Ok(1.0 / self.weighted_tail_integral_log(s)?.0)
    }

    pub fn f_tilde(&self, t: f64) -> Result<f64> {
        if !(t > self.t0) {
            return Err(Error::Domain { what: "f_tilde", value: t, floor: self.t0 });
        }
        self.f_tilde_log(t.ln())
    }

    /// Hölder rate `h(t) = η f̃(t^η)`, cross-checked against the defining
    /// integral `∫₀^{1/t} dδ / (δ g(δ^{−η}))`.
    pub fn holder_rate_h(&self, eta: f64, t: f64) -> Result<f64> {
        let (closed, direct) = self.holder_rate_paths(eta, t)?;
        let rel = (closed - direct).abs() / closed.abs();
        if !(rel <= 1e-5) {
            return Err(Error::Consistency(format!(
                "h({t}) closed form {closed} vs defining integral {direct} (rel {rel:e})"
            )));
        }
        Ok(closed)
    }

    /// `(η f̃(t^η), 1 / ∫₀^{1/t} dδ/(δ g(δ^{−η})))`.
    pub fn holder_rate_paths(&self, eta: f64, t: f64) -> Result<(f64, f64)> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Usage(format!("Hölder exponent must lie in (0, 1], got {eta}")));
        }
        if !(t > 1.0) {
            return Err(Error::Domain { what: "h", value: t, floor: 1.0 });
        }
        let s = eta * t.ln();
        self.check_log_floor(s, "h")?;
        let closed = eta * self.f_tilde_log(s)?;
        // δ = e^{−x}: ∫_{ln t}^∞ dx / g(e^{ηx})
        let lt = t.ln();
        let inner_err = std::cell::RefCell::new(None);
        let r = integrate_half_line(
            |u| match self.g_log(eta * (lt + u)) {
                Ok(g) => 1.0 / g,
                Err(e) => {
                    inner_err.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            self.split_point(s) / eta,
            self.quad,
        );
        if let Some(e) = inner_err.into_inner() {
            return Err(e);
        }
        Ok((closed, 1.0 / r?.value))
    }
}

fn parse_f64(text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Usage(format!("`{text}` is not a number")))
}

/// Bundle of the transforms induced by `f` and `γ`.
#[derive(Debug, Clone)]
pub struct RateTransforms {
    pub f: RateFunction,
    pub gamma: f64,
}

impl RateTransforms {
    pub fn new(f: RateFunction, gamma: f64) -> Self {
        RateTransforms { f, gamma }
    }
    pub fn g(&self, t: f64) -> Result<f64> {
        self.f.g(t)
    }
    pub fn g_star(&self, y: f64) -> Result<f64> {
        self.f.g_star(y)
    }
    pub fn big_g(&self, delta: f64) -> Result<f64> {
        self.f.big_g(self.gamma, delta)
    }
    pub fn f_tilde(&self, t: f64) -> Result<f64> {
        self.f.f_tilde(t)
    }
    pub fn h(&self, eta: f64, t: f64) -> Result<f64> {
        self.f.holder_rate_h(eta, t)
    }
}

/// Inverse of an arbitrary increasing `g` on `[t0, ∞)`, searched in `ln t`.
pub fn g_star<G: Fn(f64) -> f64>(g: G, y: f64, t0: f64) -> Result<f64> {
    let s0 = t0.ln();
    let eval = |s: f64| -> Result<f64> {
        let v = g(s.exp());
        if v.is_nan() {
            Err(Error::Evaluation(format!("g(e^{s}) is NaN")))
        } else {
            Ok(v)
        }
    };
    if !(y >= eval(s0)?) {
        return Err(Error::OutOfRange { value: y, reason: "below g(t0)".into() });
    }
    let mut hi = s0 + 1.0;
    while eval(hi)? < y {
        hi = s0 + 2.0 * (hi - s0);
        if hi - s0 > 700.0 {
            return Err(Error::OutOfRange { value: y, reason: "bracketing exceeded the cap".into() });
        }
    }
    Ok(solve_increasing(eval, y, s0, hi, 1e-15 * hi.abs().max(1.0))?.exp())
}

/// `G(δ) = 1 / g*((γδ)⁻¹)` for an arbitrary increasing `g`.
pub fn big_g_of<G: Fn(f64) -> f64>(g: G, gamma: f64, delta: f64, t0: f64) -> Result<f64> {
    if !(gamma > 0.0 && delta > 0.0) {
        return Err(Error::Domain { what: "G", value: delta, floor: 0.0 });
    }
    Ok(1.0 / g_star(g, 1.0 / (gamma * delta), t0)?)
}

/// Residuals of the three `G` identities at `δ`:
/// `Ġ/G = γ f(1/G)`, `G G̈ ≤ Ġ²`, `G/δ ≤ Ġ`.
///
/// Derivatives are central differences of `ℓ = ln G` with one Richardson
/// level, so `Ġ/G = ℓ'`, `(G G̈ − Ġ²)/Ġ² = ℓ''/ℓ'²` and
/// `(G/δ − Ġ)/Ġ = 1/(δ ℓ') − 1`.
pub fn claim_residuals(f: &RateFunction, gamma: f64, delta: f64, fd_step: Option<f64>) -> Result<[f64; 3]> {
    let h = fd_step.unwrap_or(delta * 1e-4);
    if !(h > 0.0 && h < 0.5 * delta) {
        return Err(Error::FiniteDifference(format!("step {h} is not small relative to δ = {delta}")));
    }
    let ell = |d: f64| f.log_big_g(gamma, d);
    let l0 = ell(delta)?;
    let (lm, lp) = (ell(delta - h)?, ell(delta + h)?);
    let (lm2, lp2) = (ell(delta - 0.5 * h)?, ell(delta + 0.5 * h)?);
    if !(lm < lm2 && lm2 < l0 && l0 < lp2 && lp2 < lp) {
        return Err(Error::FiniteDifference(format!(
            "ln G is not strictly increasing across the stencil at δ = {delta}"
        )));
    }
    let d1 = |step: f64, a: f64, b: f64| (b - a) / (2.0 * step);
    let d2 = |step: f64, a: f64, b: f64| (b - 2.0 * l0 + a) / (step * step);
    let dl = (4.0 * d1(0.5 * h, lm2, lp2) - d1(h, lm, lp)) / 3.0;
    let ddl = (4.0 * d2(0.5 * h, lm2, lp2) - d2(h, lm, lp)) / 3.0;
    let predicted = gamma * f.eval_log(-l0);
    let r1 = (dl - predicted).abs() / predicted;
    let r2 = (ddl / (dl * dl)).max(0.0);
    let r3 = (1.0 / (delta * dl) - 1.0).max(0.0);
    Ok([r1, r2, r3])
}

/// `ln G` tabulated on a log grid of `δ` with exact slopes, for callers that
/// need `G, Ġ, G̈` many times (the bumping function). Node values come from
/// the quadrature path; `Ġ/G = γ f(1/G)` supplies the slopes.
#[derive(Debug, Clone)]
pub struct GTable {
    f: RateFunction,
    gamma: f64,
    log_delta: Vec<f64>,
    ell: Vec<f64>,
    slope: Vec<f64>,
}

impl GTable {
    pub const NODES_PER_DECADE: usize = 200;

    pub fn build(f: &RateFunction, gamma: f64, delta_min: f64) -> Result<Self> {
        let g0 = 1.0 / f.tail_integral_log(f.t0().ln())?.0;
        // G(δ_max) = 1/t0
        let delta_max = 1.0 / (gamma * g0) * (1.0 - 1e-9);
        if !(delta_min < delta_max) {
            return Err(Error::OutOfRange { value: delta_min, reason: "empty G table range".into() });
        }
        let (a, b) = (delta_min.ln(), delta_max.ln());
        let n = ((b - a) / std::f64::consts::LN_10 * Self::NODES_PER_DECADE as f64).ceil() as usize + 1;
        let mut log_delta = Vec::with_capacity(n + 1);
        let mut ell = Vec::with_capacity(n + 1);
        let mut slope = Vec::with_capacity(n + 1);
        // walk down from the top so each solve can reuse nothing but stays simple
        for i in 0..=n {
            let x = a + (b - a) * i as f64 / n as f64;
            let d = x.exp();
            let l = f.log_big_g(gamma, d)?;
            log_delta.push(x);
            ell.push(l);
            // dℓ/d ln δ = δ γ f(1/G)
            slope.push(d * gamma * f.eval_log(-l));
        }
        Ok(GTable { f: f.clone(), gamma, log_delta, ell, slope })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.log_delta[0].exp(), self.log_delta.last().unwrap().exp())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rate(&self) -> &RateFunction {
        &self.f
    }

    /// `ln G(δ)`.
    pub fn log_g(&self, delta: f64) -> Result<f64> {
        let x = delta.ln();
        let n = self.log_delta.len();
        if !(x >= self.log_delta[0] && x <= self.log_delta[n - 1]) {
            if delta > 0.0 && x < self.log_delta[0] {
                return self.f.log_big_g(self.gamma, delta);
            }
            return Err(Error::OutOfRange { value: delta, reason: "outside the G table".into() });
        }
        let i = (self.log_delta.partition_point(|&v| v <= x)).clamp(1, n - 1) - 1;
        let h = self.log_delta[i + 1] - self.log_delta[i];
        let s = (x - self.log_delta[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Ok(h00 * self.ell[i] + h10 * h * self.slope[i] + h01 * self.ell[i + 1] + h11 * h * self.slope[i + 1])
    }

    /// `(G, Ġ, G̈)` at `δ > 0`.
    pub fn derivs(&self, delta: f64) -> Result<(f64, f64, f64)> {
        let l = self.log_g(delta)?;
        let d1 = self.gamma * self.f.eval_log(-l);
        let d2 = -d1 * d1 * self.f.log_slope(-l);
        let g = l.exp();
        Ok((g, g * d1, g * (d2 + d1 * d1)))
    }
}

/// A function of `δ > 0` that may also be evaluated from `ln δ`, so that
/// integrands near `δ = 0` do not lose information to underflow.
pub trait DeltaFunction {
    fn eval(&self, delta: f64) -> f64;
    fn eval_ln(&self, ln_delta: f64) -> f64 {
        self.eval(ln_delta.exp())
    }
}

impl<F: Fn(f64) -> f64> DeltaFunction for F {
    fn eval(&self, delta: f64) -> f64 {
        self(delta)
    }
}

/// `∫₀^d G(δ)/δ dδ`, after checking that `G(δ)/δ` is nonincreasing and
/// that the integral converges at `0`.
pub fn hl_integral<G: DeltaFunction + ?Sized>(big_g: &G, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain { what: "hl_rate", value: d, floor: 0.0 });
    }
    let ld = d.ln();
    let mut prev = f64::INFINITY;
    for k in 0..=400 {
        let x = ld - 30.0 * (1.0 - k as f64 / 400.0);
        let q = big_g.eval_ln(x) / x.exp();
        if q > prev * (1.0 + 1e-12) {
            return Err(Error::Monotonicity(format!(
                "G(δ)/δ increases near δ = {:e}",
                x.exp()
            )));
        }
        prev = q;
    }
    // δ = d e^{−x}
    let m = |x: f64| big_g.eval_ln(ld - x);
    let (x1, x2) = (1e3, 1e6);
    let (t1, t2) = (x1 * m(x1), x2 * m(x2));
    if t2 > 1e-12 && t2 > 0.1 * t1 {
        return Err(Error::Divergent(format!(
            "∫₀ G(δ)/δ dδ: tail mass x·G(d e^-x) stalls ({t1:e} at x=1e3, {t2:e} at x=1e6)"
        )));
    }
    let r = integrate_half_line(m, 1.0, QuadOptions::default())?;
    Ok(r.value)
}

/// Hardy–Littlewood rate `f(1/d) = (∫₀^d G(δ)/δ dδ)⁻¹`.
pub fn hl_rate<G: DeltaFunction + ?Sized>(big_g: &G, d: f64) -> Result<f64> {
    Ok(1.0 / hl_integral(big_g, d)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn g_of_examples() {
        // ∫_t^∞ a^{-3/2} da = 2 t^{-1/2}
        let f = RateFunction::power(0.5).unwrap();
        assert!(rel(f.g(4.0).unwrap(), 1.0) < 1e-10);
        // ∫_t^∞ da/(a ln²a) = 1/ln t
        let f = RateFunction::log_power(2.0).unwrap();
        assert!(rel(f.g(3f64.exp()).unwrap(), 3.0) < 1e-10);
        let f = RateFunction::power(0.3).unwrap();
        let t: f64 = 57.0;
        assert!(rel(f.g(t).unwrap(), 0.3 * t.powf(0.3)) < 1e-10);
    }

    #[test]
    fn g_of_rejects_floor_and_divergence() {
        let f = RateFunction::power(0.5).unwrap();
        assert!(matches!(f.g(1.0), Err(Error::Domain { .. })));
        let f = RateFunction::log_power(1.0).unwrap();
        assert!(matches!(f.g(10.0), Err(Error::Divergent(_))));
    }

    #[test]
    fn g_star_examples() {
        let f = RateFunction::power(0.5).unwrap();
        assert!(rel(f.g_star(1.0).unwrap(), 4.0) < 1e-10);
        let f = RateFunction::log_power(2.0).unwrap();
        assert!(rel(f.g_star(3.0).unwrap(), 3f64.exp()) < 1e-10);
        assert!(rel(g_star(|t| t, 7.0, 1.0).unwrap(), 7.0) < 1e-12);
        assert!(rel(g_star(|t| t.sqrt() / 2.0, 1.0, 1.0).unwrap(), 4.0) < 1e-12);
        assert!(rel(g_star(|t: f64| t.ln(), 3.0, 1.5).unwrap(), 3f64.exp()) < 1e-12);
        assert!(matches!(g_star(|t| t, 0.5, 1.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn big_g_examples() {
        let f = RateFunction::power(0.5).unwrap();
        assert!(rel(f.big_g(0.1, 0.2).unwrap(), 1e-4) < 1e-9);
        // g = ε t^ε with ε = 1/2 ⇒ G(δ) = δ²/4 at γ = 1
        assert!(rel(f.big_g(1.0, 0.3).unwrap(), 0.09 / 4.0) < 1e-9);
        assert!(rel(big_g_of(|t| t, 1.0, 0.5, 1.0).unwrap(), 0.5) < 1e-12);
        assert!(rel(big_g_of(|t| t.sqrt() / 2.0, 0.1, 0.2, 1.0).unwrap(), 1e-4) < 1e-10);
    }

    #[test]
    fn f_tilde_examples() {
        let f = RateFunction::power(0.5).unwrap();
        assert!(rel(f.f_tilde(16.0).unwrap(), 1.0) < 1e-10);
        let f = RateFunction::log_power(2.0).unwrap();
        assert!(matches!(f.f_tilde(4f64.exp()), Err(Error::Divergent(_))));
        // β > 2: ∫₀^∞ u/(s+u)³ du = 1/(2s)
        let f = RateFunction::log_power(3.0).unwrap();
        assert!(rel(f.f_tilde(5f64.exp()).unwrap(), 10.0) < 1e-10);
    }

    #[test]
    fn holder_rate_examples() {
        let f = RateFunction::power(0.5).unwrap();
        assert!(rel(f.holder_rate_h(0.5, 16.0).unwrap(), 0.25) < 1e-9);
        assert!(rel(f.holder_rate_h(1.0, 16.0).unwrap(), 1.0) < 1e-9);
        let f = RateFunction::power(0.2).unwrap();
        let t: f64 = 300.0;
        assert!(rel(f.holder_rate_h(1.0, t).unwrap(), 0.04 * t.powf(0.2)) < 1e-9);
    }

    #[test]
    fn claim_residual_examples() {
        let f = RateFunction::power(0.5).unwrap();
        let r = claim_residuals(&f, 0.1, 0.2, None).unwrap();
        assert!(r[0] <= 1e-4, "{r:?}");
        let f = RateFunction::power(1.0).unwrap();
        for d in [1e-3, 0.05, 0.5] {
            let r = claim_residuals(&f, 1.0, d, None).unwrap();
            assert!(r.iter().all(|&x| x <= 1e-10), "{d}: {r:?}");
        }
        let f = RateFunction::log_power(2.0).unwrap();
        let r = claim_residuals(&f, 0.05, 0.1, None).unwrap();
        assert!(r.iter().all(|&x| x <= 1e-3), "{r:?}");
    }

    #[test]
    fn hl_rate_examples() {
        assert!(rel(hl_rate(&|d: f64| d.sqrt(), 0.25).unwrap(), 1.0) < 1e-10);
        assert!(rel(hl_rate(&|d: f64| d, 1.0).unwrap(), 1.0) < 1e-12);
        // G/δ = 1/(δ log(e/δ)) increases past δ = 1
        let r = hl_rate(&|d: f64| 1.0 / (1.0 - d.ln()), 2.0);
        assert!(matches!(r, Err(Error::Monotonicity(_))), "{r:?}");
    }

    struct LogType;
    impl DeltaFunction for LogType {
        fn eval(&self, d: f64) -> f64 {
            self.eval_ln(d.ln())
        }
        fn eval_ln(&self, x: f64) -> f64 {
            1.0 / (1.0 - x)
        }
    }

    #[test]
    fn hl_rate_flags_non_integrable_singularity() {
        assert!(matches!(hl_rate(&LogType, 0.5), Err(Error::Divergent(_))));
    }

    #[test]
    fn g_table_matches_direct_path() {
        let f = RateFunction::log_power(2.0).unwrap();
        let tab = GTable::build(&f, 0.5, 1e-4).unwrap();
        for d in [1.3e-4, 2e-3, 0.05] {
            let direct = f.log_big_g(0.5, d).unwrap();
            assert!((tab.log_g(d).unwrap() - direct).abs() <= 1e-9 * direct.abs(), "{d}");
        }
        let f = RateFunction::power(0.5).unwrap();
        let tab = GTable::build(&f, 0.25, 1e-6).unwrap();
        let (g, g1, g2) = tab.derivs(0.01).unwrap();
        // G = γ²δ²/4
        let gamma: f64 = 0.25;
        assert!(rel(g, gamma * gamma * 1e-4 / 4.0) < 1e-9);
        assert!(rel(g1, gamma * gamma * 0.01 / 2.0) < 1e-9);
        assert!(rel(g2, gamma * gamma / 2.0) < 1e-9);
    }

    #[test]
    fn tabulated_power_law_reproduces_power() {
        let samples: Vec<(f64, f64)> = (0..40).map(|k| {
            let t = 2f64.powi(k);
            (t, t.powf(0.5))
        }).collect();
        let f = RateFunction::new(RateFamily::Tabulated { samples, tail_exponent: 0.5 }, None).unwrap();
        assert!(rel(f.g(4.0).unwrap(), 1.0) < 1e-9);
        assert!(rel(f.eval(10.0).unwrap(), 10f64.sqrt()) < 1e-9);
    }

    #[test]
    fn parse_and_caps() {
        let f = RateFunction::parse("power:0.5").unwrap();
        assert_eq!(f.caps(), (true, true));
        let f = RateFunction::parse("logpower:2@3").unwrap();
        assert_eq!(f.t0(), 3.0);
        assert!(RateFunction::parse("cubic:2").is_err());
        let f = RateFunction::power(0.8).unwrap();
        assert_eq!(f.caps(), (false, true));
    }
}
