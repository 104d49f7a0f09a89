use super::{BumpingAssembly, BumpingParams};
use crate::domains::{FPropertyReport, ModelDomain};
use crate::error::{Error, Result};
use crate::field::{dist, from_real, to_real, Point};
use crate::levi::{complex_from_real_grad, complex_from_real_hess, hermitian_eigenvalues, tangential_basis_from_gradient};
use crate::quad::bisect;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Total number of sample points across all checks.
    pub budget: usize,
    /// Relative tolerance for Levi-form positivity.
    pub tol: f64,
    /// Sampling radius around `w`; defaults per domain.
    pub radius: Option<f64>,
    pub seed: u64,
    /// Declared cap for the fitted Hölder constant of `ψ_w`.
    pub holder_cap: f64,
    /// Declared cap for the constants along boundary-approach rays.
    pub approach_cap: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { budget: 1000, tol: 1e-6, radius: None, seed: 0, holder_cap: 64.0, approach_cap: 16.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// The measured quantity (a max, min or fitted constant).
    pub value: f64,
    pub bound: f64,
    pub samples: usize,
    pub witness: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub kind: &'static str,
    pub domain: String,
    pub w: Vec<f64>,
    pub params: BumpingParams,
    pub radius: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub type PeakReport = PropertyReport;

impl PropertyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }

    /// Converts a failing report into a calibration-failure error.
    pub fn into_result(self) -> Result<Self> {
        match self.first_failure() {
            None => Ok(self),
            Some(c) => Err(Error::Calibration {
                property: c.name.clone(),
                detail: format!("value {} against bound {} at {:?}", c.value, c.bound, c.witness),
            }),
        }
    }
}

fn default_radius(domain: &ModelDomain) -> f64 {
    match domain.shape() {
        crate::domains::Shape::Disc | crate::domains::Shape::Ball { .. } => 0.4,
        _ => 0.2,
    }
}

fn real_normal(domain: &ModelDomain, w: &[Complex64]) -> Result<DVector<f64>> {
    Ok(to_real(&domain.unit_normal(w)?))
}

fn tangent_direction<R: Rng>(rng: &mut R, n: &DVector<f64>) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n.len(), |_, _| rng.gen_range(-1.0..1.0));
        let v = &v - n * v.dot(n);
        let nv = v.norm();
        if nv > 1e-3 {
            return v / nv;
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, top: f64, decades: f64) -> f64 {
    top * 10f64.powf(-decades * rng.gen::<f64>())
}

struct LineSample {
    base: DVector<f64>,
    normal: DVector<f64>,
    /// Offset along the normal where `ρ = 0`.
    t_level: f64,
    /// Offset along the normal where `r = 0`.
    t_boundary: f64,
}

impl LineSample {
    fn at(&self, t: f64) -> Point {
        from_real(&(&self.base + &self.normal * t))
    }
}

fn line_sample<R: Rng>(
    a: &BumpingAssembly,
    w: &[Complex64],
    n: &DVector<f64>,
    radius: f64,
    rng: &mut R,
) -> Option<LineSample> {
    let s = log_uniform(rng, radius, 3.0);
    let base = to_real(w) + tangent_direction(rng, n) * s;
    let line = LineSample { base, normal: n.clone(), t_level: 0.0, t_boundary: 0.0 };
    let rho = |t: f64| a.rho(&line.at(t), w).unwrap_or(f64::NAN);
    let lo = -s;
    if !(rho(lo) < 0.0) {
        return None;
    }
    let mut hi = s;
    let mut found = false;
    for _ in 0..6 {
        let v = rho(hi);
        if v.is_nan() {
            return None;
        }
        if v > 0.0 {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return None;
    }
    let t_level = bisect(rho, lo, hi, 1e-16)?;
    let r = |t: f64| a.domain().r_derivs_unchecked(&line.at(t)).value;
    let t_boundary = bisect(r, lo, t_level, 1e-16)?;
    let z = line.at(t_level);
    if !a.domain().in_patch(&z) || dist(&z, w) == 0.0 {
        return None;
    }
    Some(LineSample { t_level, t_boundary, ..line })
}

/// Points of `S_w = {ρ(·, w) = 0}` near `w`, found by root-finding along
/// normal lines through tangential offsets of `w`.
pub fn sample_level_set<R: Rng>(
    a: &BumpingAssembly,
    w: &[Complex64],
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let n = real_normal(a.domain(), w)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..20 * count + 50 {
        if out.len() == count {
            break;
        }
        if let Some(l) = line_sample(a, w, &n, radius, rng) {
            out.push(l.at(l.t_level));
        }
    }
    Ok(out)
}

/// Points outside `Ω̄` but inside `{ρ(·, w) < 0}`.
pub fn sample_shell<R: Rng>(
    a: &BumpingAssembly,
    w: &[Complex64],
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let n = real_normal(a.domain(), w)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..20 * count + 50 {
        if out.len() == count {
            break;
        }
        if let Some(l) = line_sample(a, w, &n, radius, rng) {
            let u: f64 = rng.gen_range(0.05..0.95);
            let z = l.at(l.t_boundary + u * (l.t_level - l.t_boundary));
            if a.domain().r_derivs_unchecked(&z).value > 0.0 && a.rho(&z, w).map_or(false, |v| v < 0.0) {
                out.push(z);
            }
        }
    }
    Ok(out)
}

/// Points of `Ω` near `w`.
pub fn sample_interior<R: Rng>(
    a: &BumpingAssembly,
    w: &[Complex64],
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let d = a.domain();
    let n = real_normal(d, w)?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..20 * count + 50 {
        if out.len() == count {
            break;
        }
        let s = log_uniform(rng, radius, 3.0);
        let t = s * rng.gen_range(0.0..1.5);
        let x = to_real(w) + tangent_direction(rng, &n) * s - &n * t;
        let z = from_real(&x);
        if d.in_patch(&z) && d.r_derivs_unchecked(&z).value < 0.0 && dist(&z, w) <= radius {
            out.push(z);
        }
    }
    Ok(out)
}

fn witness(z: &[Complex64]) -> Option<Vec<f64>> {
    Some(to_real(z).as_slice().to_vec())
}

struct Extremum {
    value: f64,
    at: Option<Vec<f64>>,
    samples: usize,
}

impl Extremum {
    fn max() -> Self {
        Extremum { value: f64::NEG_INFINITY, at: None, samples: 0 }
    }
    fn min() -> Self {
        Extremum { value: f64::INFINITY, at: None, samples: 0 }
    }
    fn push_max(&mut self, v: f64, z: &[Complex64]) {
        self.samples += 1;
        if v > self.value || v.is_nan() {
            self.value = v;
            self.at = witness(z);
        }
    }
    fn push_min(&mut self, v: f64, z: &[Complex64]) {
        self.samples += 1;
        if v < self.value || v.is_nan() {
            self.value = v;
            self.at = witness(z);
        }
    }
    fn check(self, name: &str, bound: f64, pass: bool) -> Check {
        Check { name: name.into(), pass: pass && self.samples > 0, value: self.value, bound, samples: self.samples, witness: self.at }
    }
}

fn check_boundary_point(d: &ModelDomain, w: &[Complex64]) -> Result<()> {
    let r = d.eval_r(w)?;
    if r.abs() > 1e-12 {
        return Err(Error::Usage(format!("w is not a boundary point (r(w) = {r})")));
    }
    Ok(())
}

/// Smallest eigenvalue of the Levi form restricted to the complex tangent
/// space of the level set, and the largest eigenvalue modulus of the full form.
fn restricted_levi(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Result<(f64, f64)> {
    let h = complex_from_real_hess(hess);
    let full = hermitian_eigenvalues(&h);
    let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let d = complex_from_real_grad(grad);
    if d.len() == 1 {
        // no complex tangent directions in one variable
        return Ok((0.0, scale.max(1.0)));
    }
    let basis = tangential_basis_from_gradient(&d)?;
    let k = basis.len();
    let m = DMatrix::from_fn(k, k, |a, b| {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..d.len() {
            for l in 0..d.len() {
                s += h[(j, l)] * basis[a][j] * basis[b][l].conj();
            }
        }
        s
    });
    Ok((hermitian_eigenvalues(&m)[0], scale))
}

fn approach_ray(d: &ModelDomain, w: &[Complex64], count: usize) -> Result<Vec<Point>> {
    let n = d.unit_normal(w)?;
    let top = 0.5 * d.reach();
    Ok((0..count)
        .map(|k| {
            let t = top * 10f64.powf(-5.0 * k as f64 / (count.max(2) - 1) as f64);
            w.iter().zip(&n).map(|(a, b)| a - b * t).collect::<Point>()
        })
        .filter(|z| d.in_patch(z))
        .collect())
}

/// Checks the bumping-function properties at the boundary point `w`.
pub fn verify_bumping(a: &BumpingAssembly, w: &[Complex64], opts: &VerifyOptions) -> Result<PropertyReport> {
    let d = a.domain();
    check_boundary_point(d, w)?;
    let radius = opts.radius.unwrap_or_else(|| default_radius(d));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let budget = opts.budget.max(8);
    let mut checks = Vec::new();

    let rww = a.rho(w, w)?;
    checks.push(Check {
        name: "rho_vanishes_at_w".into(),
        pass: rww.abs() <= 1e-12,
        value: rww.abs(),
        bound: 1e-12,
        samples: 1,
        witness: witness(w),
    });

    let mut inner = Extremum::max();
    for z in sample_interior(a, w, budget / 4, radius, &mut rng)? {
        let g = a.big_g(dist(&z, w))?.0;
        let rho = a.rho(&z, w)?;
        let scale = rho.abs() + g;
        inner.push_max((rho + g) / scale, &z);
    }
    let ok = inner.value <= 1e-14;
    checks.push(inner.check("rho_below_minus_G", 1e-14, ok));

    let mut approach = Extremum::max();
    for z in approach_ray(d, w, 24)? {
        let p = d.boundary_project(&z)?;
        let dz = dist(&z, &p);
        approach.push_max(-a.rho(&z, &p)? / dz, &z);
    }
    let ok = approach.value.is_finite() && approach.value <= opts.approach_cap;
    checks.push(approach.check("rho_at_projection_vs_distance", opts.approach_cap, ok));

    let level = sample_level_set(a, w, budget / 2, radius, &mut rng)?;
    let mut gmin = Extremum::min();
    let mut gmax = Extremum::max();
    let mut levi = Extremum::min();
    let mut outside = Extremum::min();
    let mut sandwich = Extremum::max();
    let mut phi_range = Extremum::max();
    for z in &level {
        let rd = a.rho_derivs(z, w)?;
        let gn = crate::field::norm(&complex_from_real_grad(&rd.grad));
        gmin.push_min(gn, z);
        gmax.push_max(gn, z);
        let (lmin, scale) = restricted_levi(&rd.grad, &rd.hess)?;
        levi.push_min(lmin / scale.max(f64::MIN_POSITIVE), z);
        // r and the root of ρ are only known up to rounding
        let dz = dist(z, w);
        let allowance = d.r_rounding(z) + 8.0 * f64::EPSILON * (crate::field::norm(z) + dz) * gn.max(1.0);
        let r = d.r_derivs_unchecked(z).value;
        outside.push_min(r + allowance, z);
        let g = a.big_g(dz)?.0;
        if g > 1e3 * allowance {
            // how far r leaves [G, 2G], relative to G
            let excess = ((g - r - allowance) / g).max((r - 2.0 * g - allowance) / g);
            sandwich.push_max(excess, z);
        }
        let phi = a.phi_global(z)?.value;
        let eps = a.params().epsilon;
        phi_range.push_max(phi.max(-eps * phi - 1.0), z);
    }
    let (lo, hi) = (gmin.value, gmax.value);
    checks.push(gmin.check("gradient_lower", 0.25, lo >= 0.25));
    checks.push(gmax.check("gradient_upper", 4.0, hi <= 4.0));
    let ok = levi.value >= -opts.tol;
    checks.push(levi.check("level_set_pseudoconvex", -opts.tol, ok));
    let ok = outside.value > 0.0;
    checks.push(outside.check("level_set_outside_closure", 0.0, ok));
    let ok = sandwich.value <= 1e-9;
    checks.push(sandwich.check("strip_sandwich", 1e-9, ok));
    let ok = phi_range.value <= 1e-15;
    checks.push(phi_range.check("phi_range", 0.0, ok));

    let pass = checks.iter().all(|c| c.pass);
    Ok(PropertyReport {
        kind: "bumping",
        domain: d.name(),
        w: to_real(w).as_slice().to_vec(),
        params: *a.params(),
        radius,
        checks,
        pass,
    })
}

/// Checks the peak-function properties of `ψ_w`.
pub fn verify_peak(a: &BumpingAssembly, w: &[Complex64], opts: &VerifyOptions) -> Result<PeakReport> {
    let d = a.domain();
    check_boundary_point(d, w)?;
    let radius = opts.radius.unwrap_or_else(|| default_radius(d));
    let eta = a.params().eta;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let budget = opts.budget.max(8);
    let mut checks = Vec::new();

    let interior = sample_interior(a, w, budget / 3, radius, &mut rng)?;
    let shell = sample_shell(a, w, budget / 3, radius, &mut rng)?;

    let mut region: Vec<(Point, f64)> = vec![(w.to_vec(), 0.0)];
    for z in interior.iter().chain(&shell) {
        region.push((z.clone(), a.peak_psi(z, w)?));
    }
    let mut holder = Extremum::max();
    for _ in 0..budget {
        let i = rng.gen_range(0..region.len());
        let j = rng.gen_range(0..region.len());
        let dz = dist(&region[i].0, &region[j].0);
        if dz > 0.0 {
            holder.push_max((region[i].1 - region[j].1).abs() / dz.powf(eta), &region[i].0);
        }
    }
    let ok = holder.value <= opts.holder_cap;
    checks.push(holder.check("holder_continuity", opts.holder_cap, ok));

    let mut below = Extremum::max();
    for z in &interior {
        let g = a.big_g(dist(z, w))?.0.powf(eta);
        let psi = a.peak_psi(z, w)?;
        below.push_max((psi + g) / (psi.abs() + g), z);
    }
    let ok = below.value <= 1e-14;
    checks.push(below.check("psi_below_minus_G_eta", 1e-14, ok));

    let mut approach = Extremum::max();
    for z in approach_ray(d, w, 24)? {
        let p = d.boundary_project(&z)?;
        let dz = dist(&z, &p);
        approach.push_max(-a.peak_psi(&z, &p)? / dz.powf(eta), &z);
    }
    let ok = approach.value.is_finite() && approach.value <= opts.approach_cap;
    checks.push(approach.check("psi_at_projection_vs_distance", opts.approach_cap, ok));

    let mut psh = Extremum::min();
    for z in interior.iter().chain(&shell) {
        let pd = a.psi_derivs(z, w)?;
        let ev = hermitian_eigenvalues(&complex_from_real_hess(&pd.hess));
        let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        psh.push_min(ev[0] / scale.max(f64::MIN_POSITIVE), z);
    }
    let ok = psh.value >= -opts.tol;
    checks.push(psh.check("psi_plurisubharmonic", -opts.tol, ok));

    let pass = checks.iter().all(|c| c.pass);
    Ok(PropertyReport {
        kind: "peak",
        domain: d.name(),
        w: to_real(w).as_slice().to_vec(),
        params: *a.params(),
        radius,
        checks,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationOptions {
    pub verify: VerifyOptions,
    /// Number of boundary points `w` (the distinguished point plus random ones).
    pub w_samples: usize,
    /// Starting peak exponent.
    pub eta: f64,
    pub epsilon_steps: u32,
    pub gamma_steps: u32,
    pub l_steps: u32,
    /// Strip points per `δ` for the preliminary f-Property check.
    pub fproperty_points: usize,
    /// When false, only the bumping checks are calibrated.
    pub require_peak: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            verify: VerifyOptions::default(),
            w_samples: 3,
            eta: 0.5,
            epsilon_steps: 8,
            gamma_steps: 14,
            l_steps: 3,
            fproperty_points: 200,
            require_peak: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub domain: String,
    pub params: BumpingParams,
    pub radius: f64,
    pub w: Vec<Vec<f64>>,
    pub fproperty: Vec<FPropertyReport>,
    pub bumping: Vec<PropertyReport>,
    pub peak: Vec<PropertyReport>,
    pub attempts: usize,
}

fn w_points(d: &ModelDomain, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = vec![d.base_point()];
    out.extend(d.sample_boundary(&mut rng, count.saturating_sub(1)));
    out
}

/// Runs `verify` at every `w`, stopping at the first failing report.
fn all_pass<F>(ws: &[Point], mut verify: F) -> Result<std::result::Result<Vec<PropertyReport>, String>>
where
    F: FnMut(&[Complex64]) -> Result<PropertyReport>,
{
    let mut reps = Vec::new();
    for w in ws {
        let rep = verify(w)?;
        if let Some(c) = rep.first_failure() {
            return Ok(Err(c.name.clone()));
        }
        reps.push(rep);
    }
    Ok(Ok(reps))
}

/// For `η ∈ {η₀, η₀/2}` and `ε ∈ {1/96, 1/192, …}` (largest first), keeps the
/// largest `γ ∈ {1, 1/2, …}` passing the bumping checks at every sampled `w`,
/// then tries `L ∈ {1, 2, 4, …}` (smallest first) and a shrinking radius until
/// the peak checks pass too.
pub fn calibrate(domain: &ModelDomain, opts: &CalibrationOptions) -> Result<CalibrationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.verify.seed);
    let mut fprops = Vec::new();
    for j in [3, 6, 10] {
        let delta = 2f64.powi(-j);
        let grid = domain.strip_points(&mut rng, delta, opts.fproperty_points)?;
        let rep = domain.fproperty_check(delta, &grid)?;
        let pass = rep.pass;
        fprops.push(rep);
        if !pass {
            return Err(Error::Calibration {
                property: "f_property".into(),
                detail: format!("candidate family fails at delta = {delta}: {:?}", fprops.last()),
            });
        }
    }
    let ws = w_points(domain, opts.w_samples, opts.verify.seed);
    let r0 = opts.verify.radius.unwrap_or_else(|| default_radius(domain));
    let mut attempts = 0;
    let mut last = String::new();
    let eta_steps = if opts.require_peak { 2 } else { 1 };
    for eta_div in 0..eta_steps {
        let eta = opts.eta / 2f64.powi(eta_div);
        for ei in 0..opts.epsilon_steps {
            let epsilon = 1.0 / 96.0 / 2f64.powi(ei as i32);
            let mut bumped = None;
            for gi in 0..opts.gamma_steps {
                let params = BumpingParams { epsilon, gamma: 2f64.powi(-(gi as i32)), eta, ..Default::default() };
                attempts += 1;
                let a = BumpingAssembly::new(domain.clone(), params)?;
                match all_pass(&ws, |w| verify_bumping(&a, w, &opts.verify))? {
                    Ok(reps) => {
                        bumped = Some((a, reps));
                        break;
                    }
                    Err(name) => last = format!("bumping check {name} fails at {params:?}"),
                }
            }
            let Some((base, bumping)) = bumped else { continue };
            let report = |params: BumpingParams, radius: f64, bumping: Vec<PropertyReport>, peak, attempts| CalibrationReport {
                domain: domain.name(),
                params,
                radius,
                w: ws.iter().map(|w| to_real(w).as_slice().to_vec()).collect(),
                fproperty: fprops.clone(),
                bumping,
                peak,
                attempts,
            };
            if !opts.require_peak {
                return Ok(report(*base.params(), r0, bumping, Vec::new(), attempts));
            }
            for rad_div in 0..2 {
                for li in 0..opts.l_steps {
                    let params = BumpingParams { l: 2f64.powi(li as i32), ..*base.params() };
                    let radius = r0 / 2f64.powi(rad_div);
                    let vopts = VerifyOptions { radius: Some(radius), ..opts.verify };
                    attempts += 1;
                    let a = BumpingAssembly { params, ..base.clone() };
                    // a second, independent sample guards against a lucky first draw
                    let confirm = VerifyOptions { seed: vopts.seed.wrapping_add(1), ..vopts };
                    let outcome = match all_pass(&ws, |w| verify_peak(&a, w, &vopts))? {
                        Ok(reps) => all_pass(&ws, |w| verify_peak(&a, w, &confirm))?.map(|_| reps),
                        Err(name) => Err(name),
                    };
                    match outcome {
                        Ok(peak) => return Ok(report(params, radius, bumping, peak, attempts)),
                        Err(name) => last = format!("peak check {name} fails at {params:?}, radius {radius}"),
                    }
                }
            }
        }
    }
    Err(Error::Calibration { property: "calibration_exhausted".into(), detail: last })
}
