//! The acceptance suite: twelve end-to-end checks with fixed tolerances.

use std::cell::OnceCell;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bumping::{
    calibrate, verify_bumping, verify_peak, BumpingAssembly, BumpingParams, CalibrationOptions, CalibrationReport,
    VerifyOptions,
};
use crate::domains::ModelDomain;
use crate::field::{norm, Point};
use crate::holomaps::{fubini_paths, verify_hardy_littlewood, GProfile};
use crate::metric::{
    default_rate_grid, disc_feasible, exact_metric, kobayashi_upper, lower_bound_rate, mean_value_check, AnalyticDisc,
    PeakModel, UpperOptions,
};
use crate::rates::{claim_residuals, RateFunction};
use crate::{Error, Result};

pub const CRITERIA: [&str; 12] = [
    "rate transforms match closed forms",
    "G identities hold",
    "Hölder rate: both evaluation paths agree",
    "f-Property on the ball",
    "bumping properties on D2 and D3",
    "peak properties on D2",
    "metric sandwich on D1 and D2",
    "finite-type rate slopes",
    "infinite-type rate slope on D5",
    "Hardy–Littlewood extremal",
    "mean-value and Jensen inequalities",
    "determinism",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Run criteria 1–11 a second time and compare the reports.
    pub determinism: bool,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { seed: 0, determinism: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub pass: bool,
}

/// Runs criteria 1–11 and, if requested, the determinism rerun.
pub fn run_all(opts: &AcceptanceOptions) -> AcceptanceReport {
    let first = run_pass(opts.seed);
    let mut criteria = first.clone();
    if opts.determinism {
        let second = run_pass(opts.seed);
        let a = serde_json::to_string(&first).unwrap_or_default();
        let b = serde_json::to_string(&second).unwrap_or_default();
        let same = a == b && !a.is_empty();
        criteria.push(CriterionResult {
            id: 12,
            name: CRITERIA[11],
            pass: same,
            summary: if same { "two runs produced identical reports".into() } else { "reports differ between runs".into() },
            details: json!({ "report_bytes": a.len(), "identical": same }),
        });
    }
    let pass = criteria.iter().all(|c| c.pass);
    AcceptanceReport { seed: opts.seed, criteria, pass }
}

/// Runs one criterion in `1..=11` on a fresh context.
pub fn run_criterion(id: usize, seed: u64) -> Result<CriterionResult> {
    if !(1..=11).contains(&id) {
        return Err(Error::Usage(format!("criterion {id} is not in 1..=11")));
    }
    Ok(Context::new(seed).run(id))
}

fn run_pass(seed: u64) -> Vec<CriterionResult> {
    let ctx = Context::new(seed);
    (1..=11).map(|id| ctx.run(id)).collect()
}

type Outcome = Result<(bool, String, Value)>;

struct Context {
    seed: u64,
    ball: OnceCell<std::result::Result<CalibrationReport, String>>,
}

impl Context {
    fn new(seed: u64) -> Self {
        Context { seed, ball: OnceCell::new() }
    }

    fn run(&self, id: usize) -> CriterionResult {
        let outcome = match id {
            1 => rate_transforms(),
            2 => g_identities(),
            3 => holder_paths(),
            4 => ball_f_property(self.seed),
            5 => self.bumping(),
            6 => self.peak(),
            7 => self.sandwich(),
            8 => self.finite_type_slopes(),
            9 => self.infinite_type_slope(),
            10 => hardy_littlewood(self.seed),
            _ => self.mean_value(),
        };
        let (pass, summary, details) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}"), Value::Null),
        };
        CriterionResult { id, name: CRITERIA[id - 1], pass, summary, details }
    }

    fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions { verify: VerifyOptions { seed: self.seed, ..Default::default() }, ..Default::default() }
    }

    fn ball_calibration(&self) -> Result<&CalibrationReport> {
        self.ball
            .get_or_init(|| {
                let d = ModelDomain::ball(2).map_err(|e| e.to_string())?;
                calibrate(&d, &self.calibration_options()).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Calibration { property: "ball".into(), detail: e.clone() })
    }

    fn ball_model(&self) -> Result<PeakModel> {
        let rep = self.ball_calibration()?;
        let a = BumpingAssembly::new(ModelDomain::ball(2)?, rep.params)?;
        PeakModel::from_reports(a, &rep.peak)
    }

    /// Peak model from a bumping-only calibration; the approach constant is
    /// still read off `verify_peak`, whose plurisubharmonicity check is
    /// reported but not required.
    fn bumping_only_model(&self, d: &ModelDomain, budget: usize) -> Result<(PeakModel, CalibrationReport, bool)> {
        let mut opts = self.calibration_options();
        opts.require_peak = false;
        opts.verify.budget = budget;
        let rep = calibrate(d, &opts)?;
        let a = BumpingAssembly::new(d.clone(), rep.params)?;
        let peak = verify_peak(&a, &d.base_point(), &VerifyOptions { budget, seed: self.seed, ..Default::default() })?;
        let psh = peak.check("psi_plurisubharmonic").is_some_and(|c| c.pass);
        Ok((PeakModel::from_reports(a, &[peak])?, rep, psh))
    }

    fn bumping(&self) -> Outcome {
        let verify = VerifyOptions { budget: 4000, seed: self.seed.wrapping_add(101), ..Default::default() };
        let mut pass = true;
        let mut details = serde_json::Map::new();
        let mut notes = Vec::new();
        let d3 = ModelDomain::finite_graph(2)?;
        let d3_opts = CalibrationOptions { require_peak: false, ..self.calibration_options() };
        let d3_rep = calibrate(&d3, &d3_opts);
        let cases: [(ModelDomain, Result<BumpingParams>); 2] = [
            (ModelDomain::ball(2)?, self.ball_calibration().map(|r| r.params)),
            (d3, d3_rep.map(|r| r.params)),
        ];
        for (d, params) in cases {
            let params = match params {
                Ok(p) => p,
                Err(e) => {
                    pass = false;
                    notes.push(format!("{}: {e}", d.name()));
                    continue;
                }
            };
            let a = BumpingAssembly::new(d.clone(), params)?;
            let rep = verify_bumping(&a, &d.base_point(), &verify)?;
            let count = |n: &str| rep.check(n).map_or(0, |c| c.samples);
            let enough = count("rho_below_minus_G") >= 1000 && count("gradient_lower") >= 100;
            pass &= rep.pass && enough;
            if let Some(c) = rep.first_failure() {
                notes.push(format!("{}: {} fails ({:e})", d.name(), c.name, c.value));
            }
            details.insert(d.name(), json!({ "params": params, "checks": rep.checks }));
        }

        // negative controls must fail with a witness
        let d2 = ModelDomain::ball(2)?;
        let loose = BumpingAssembly::new(d2.clone(), BumpingParams { epsilon: 0.5, ..Default::default() })?;
        let rep = verify_bumping(&loose, &d2.base_point(), &verify)?;
        let control = rep.first_failure().map(|c| (c.name.clone(), c.witness.is_some()));
        let loose_ok = matches!(control, Some((_, true)));
        let reversed = calibrate(&d2.clone().with_reversed_family(), &self.calibration_options());
        let reversed_ok = matches!(&reversed, Err(Error::Calibration { property, .. }) if property == "f_property");
        pass &= loose_ok && reversed_ok;
        details.insert(
            "negative_controls".into(),
            json!({ "epsilon_half_failure": control.map(|c| c.0), "reversed_family_rejected": reversed_ok }),
        );
        let summary = if notes.is_empty() { "D2 and D3 pass at 10³ interior samples; controls fail".into() } else { notes.join("; ") };
        Ok((pass, summary, Value::Object(details)))
    }

    fn peak(&self) -> Outcome {
        let rep = self.ball_calibration()?;
        let d = ModelDomain::ball(2)?;
        let a = BumpingAssembly::new(d.clone(), rep.params)?;
        let opts = VerifyOptions { budget: 3000, radius: Some(rep.radius), seed: self.seed.wrapping_add(202), ..Default::default() };
        let peak = verify_peak(&a, &d.base_point(), &opts)?;
        let enough = peak.check("psi_below_minus_G_eta").map_or(0, |c| c.samples) >= 1000;
        let psh = peak.check("psi_plurisubharmonic").map_or(f64::NAN, |c| c.value);
        let summary = match peak.first_failure() {
            None => format!("all peak checks pass; min relative eigenvalue {psh:.3e}; params {:?}", rep.params),
            Some(c) => format!("{} fails ({:e})", c.name, c.value),
        };
        Ok((peak.pass && enough, summary, json!({ "params": rep.params, "checks": peak.checks })))
    }

    fn sandwich(&self) -> Outcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7);
        let upper = UpperOptions { degree: 1, ..Default::default() };
        let mut worst_upper = 0.0f64;
        let mut worst_lower = f64::NEG_INFINITY;
        let mut peak_count = 0;
        let mut failures = Vec::new();
        let d1 = ModelDomain::disc();
        let d1_model = {
            let rep = calibrate(&d1, &self.calibration_options())?;
            PeakModel::from_reports(BumpingAssembly::new(d1.clone(), rep.params)?, &rep.peak)?
        };
        let d2_model = self.ball_model()?;
        for (d, model) in [(d1, d1_model), (ModelDomain::ball(2)?, d2_model)] {
            let c_hat = model.rate_constant(&default_rate_grid())?;
            for _ in 0..100 {
                let z = random_point(&mut rng, d.dim(), 0.99);
                let nz = norm(&z);
                let normal: Point = z.iter().map(|c| c / nz).collect();
                let tangential: Point = if d.dim() == 1 {
                    vec![normal[0] * Complex64::i()]
                } else {
                    vec![-normal[1].conj(), normal[0].conj()]
                };
                for x in [normal, tangential] {
                    let exact = exact_metric(&d, &z, &x)?;
                    let up = kobayashi_upper(&d, &z, &x, &upper)?.value;
                    worst_upper = worst_upper.max(up / exact - 1.0);
                    if up < exact * (1.0 - 1e-9) || up > exact * 1.01 {
                        failures.push(format!("upper {up} vs exact {exact} at {z:?}"));
                    }
                    let delta = d.boundary_distance(&z)?;
                    let mut lows = vec![lower_bound_rate(&d, c_hat, &z, &x)?.value];
                    if let Ok(b) = model.peak_bound(delta, crate::metric::max_norm(&x)) {
                        lows.push(b.value);
                        peak_count += 1;
                    }
                    for low in lows {
                        worst_lower = worst_lower.max(low / exact - 1.0);
                        if low > exact * (1.0 + 1e-9) {
                            failures.push(format!("lower {low} exceeds exact {exact} at {z:?}"));
                        }
                    }
                }
            }
        }
        let pass = failures.is_empty();
        let summary = if pass {
            format!("400 cases; upper within {:.3}% of exact; lower/exact − 1 ≤ {worst_lower:.3}", 100.0 * worst_upper)
        } else {
            failures[0].clone()
        };
        Ok((pass, summary, json!({ "max_upper_excess": worst_upper, "max_lower_ratio_minus_one": worst_lower, "peak_bounds": peak_count, "failures": failures.len() })))
    }

    fn finite_type_slopes(&self) -> Outcome {
        let deltas = log_grid(-4.0, -2.0, 9);
        let xs: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
        let d2 = ModelDomain::ball(2)?;
        let c2 = self.ball_model()?.rate_constant(&default_rate_grid())?;
        let x = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let mut lower = Vec::new();
        let mut exact = Vec::new();
        for &dl in &deltas {
            let z = [Complex64::new(1.0 - dl, 0.0), Complex64::new(0.0, 0.0)];
            lower.push(lower_bound_rate(&d2, c2, &z, &x)?.value.ln());
            exact.push(exact_metric(&d2, &z, &x)?.ln());
        }
        let s_lower = slope(&xs, &lower);
        let s_exact = slope(&xs, &exact);

        let d3 = ModelDomain::finite_graph(2)?;
        let (m3, _, psh3) = self.bumping_only_model(&d3, 1000)?;
        let c3 = m3.rate_constant(&default_rate_grid())?;
        let x3 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let mut lower3 = Vec::new();
        for &dl in &deltas {
            let z = [Complex64::new(0.0, 0.0), Complex64::new(0.0, -dl)];
            lower3.push(lower_bound_rate(&d3, c3, &z, &x3)?.value.ln());
        }
        let s3 = slope(&xs, &lower3);
        let pass = (s_lower - 0.5).abs() <= 0.02 && (s_exact - 0.5).abs() <= 0.02 && (s3 - 0.25).abs() <= 0.03;
        let summary = format!("D2 lower {s_lower:.4}, D2 exact {s_exact:.4}, D3 lower {s3:.4}");
        Ok((pass, summary, json!({ "d2_lower_slope": s_lower, "d2_exact_slope": s_exact, "d2_c_hat": c2, "d3_lower_slope": s3, "d3_c_hat": c3, "d3_peak_psh": psh3 })))
    }

    fn infinite_type_slope(&self) -> Outcome {
        let d5 = ModelDomain::infinite_graph(0.5)?;
        let (model, rep, psh) = self.bumping_only_model(&d5, 4000)?;
        let fprop = rep.fproperty.iter().all(|f| f.pass);
        let c_hat = model.rate_constant(&default_rate_grid())?;
        let deltas = log_grid(-6.0, -2.0, 13);
        let x = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &dl in &deltas {
            let z = [Complex64::new(0.0, 0.0), Complex64::new(0.0, -dl)];
            xs.push((1.0 / dl).ln().ln());
            ys.push(lower_bound_rate(&d5, c_hat, &z, &x)?.value.ln());
        }
        let s = slope(&xs, &ys);
        let pass = fprop && (s - 1.0).abs() <= 0.1;
        let summary = format!("log–loglog slope {s:.4}; f-Property check {}", if fprop { "passes" } else { "fails" });
        Ok((
            pass,
            summary,
            json!({ "slope": s, "c_hat": c_hat, "fproperty": rep.fproperty, "params": rep.params, "peak_psh": psh }),
        ))
    }

    fn mean_value(&self) -> Outcome {
        let rep = self.ball_calibration()?;
        let model = self.ball_model()?;
        let d = ModelDomain::ball(2)?;
        let a = model.assembly();
        let f1 = |s: f64| model.f1(s);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xb);
        let (mut min_sub, mut min_jensen) = (f64::INFINITY, f64::INFINITY);
        let mut all_pass = true;
        for _ in 0..100 {
            let dir = random_point(&mut rng, 2, 1.0);
            let nd = norm(&dir);
            let w: Point = dir.iter().map(|c| c / nd).collect();
            let depth = 10f64.powf(rng.gen_range(-3.0..-1.0));
            let z: Point = w.iter().map(|c| c * (1.0 - depth)).collect();
            let mut disc = AnalyticDisc::new(vec![z.clone(), random_point(&mut rng, 2, 1.0), random_point(&mut rng, 2, 1.0)], 1.0);
            while !disc_feasible(&d, &disc, 64).feasible || disc_reach(&disc, &w) > rep.radius {
                disc.scale *= 0.8;
            }
            let psi = a.psi_field(&w);
            let mv = mean_value_check(&psi, &disc, 256, Some((&f1, &w)), 1e-9)?;
            min_sub = min_sub.min(mv.sub_mean_gap);
            min_jensen = mv.jensen_gaps.iter().fold(min_jensen, |m, g| m.min(*g));
            all_pass &= mv.subharmonic;
        }
        let pass = all_pass && min_sub >= -1e-9 && min_jensen >= -1e-9;
        let summary = format!("100 discs; min sub-mean gap {min_sub:.3e}, min Jensen gap {min_jensen:.3e}");
        Ok((pass, summary, json!({ "min_sub_mean_gap": min_sub, "min_jensen_gap": min_jensen, "subharmonic": all_pass })))
    }
}

fn rate_transforms() -> Outcome {
    let mut worst = 0.0f64;
    for eps in [0.25, 0.5] {
        let f = RateFunction::power(eps)?;
        for t in log_grid(2f64.log10(), 6.0, 25) {
            let g = f.g(t)?;
            let ft = f.f_tilde(t)?;
            worst = worst.max(rel(g, eps * t.powf(eps))).max(rel(ft, eps * eps * t.powf(eps)));
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.3e}"), json!({ "max_relative_error": worst })))
}

fn g_identities() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_linear = 0.0f64;
    let families = [RateFunction::power(0.25)?, RateFunction::power(0.5)?, RateFunction::log_power(2.0)?];
    for gamma in [1.0, 0.1, 0.01] {
        for delta in log_grid(-4.0, -1.0, 7) {
            for f in &families {
                worst = claim_residuals(f, gamma, delta, None)?.iter().fold(worst, |m, r| m.max(*r));
            }
            let linear = RateFunction::power(1.0)?;
            worst_linear = claim_residuals(&linear, gamma, delta, None)?.iter().fold(worst_linear, |m, r| m.max(*r));
        }
    }
    let pass = worst <= 1e-3 && worst_linear <= 1e-10;
    Ok((
        pass,
        format!("max residual {worst:.3e}; linear case {worst_linear:.3e}"),
        json!({ "max_residual": worst, "max_residual_linear": worst_linear }),
    ))
}

fn holder_paths() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_fubini = 0.0f64;
    for eps in [0.25, 0.5] {
        let f = RateFunction::power(eps)?;
        for eta in [0.25, 0.5, 1.0] {
            for t in log_grid(1.0, 4.0, 7) {
                let (closed, direct) = f.holder_rate_paths(eta, t)?;
                // (1/η)(f̃(t^η))⁻¹ = 1/h
                let chain = 1.0 / (eta * f.f_tilde(t.powf(eta))?);
                worst = worst.max(rel(direct, closed)).max(rel(1.0 / closed, chain));
                let (a, b) = fubini_paths(&f, eta, t)?;
                worst_fubini = worst_fubini.max(rel(a, b));
            }
        }
    }
    let pass = worst <= 1e-5 && worst_fubini <= 1e-5;
    Ok((
        pass,
        format!("max relative gap {worst:.3e}; Fubini {worst_fubini:.3e}"),
        json!({ "max_relative_gap": worst, "fubini_gap": worst_fubini }),
    ))
}

fn ball_f_property(seed: u64) -> Outcome {
    let d = ModelDomain::ball(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4);
    let mut reports = Vec::new();
    let mut worst = 0.0f64;
    let mut pass = true;
    for delta in [1e-1, 1e-2, 1e-3] {
        let grid = d.strip_points(&mut rng, delta, 1000)?;
        let rep = d.fproperty_check(delta, &grid)?;
        worst = worst.max((rep.best_c - 1.0).abs());
        pass &= rep.pass && rep.points == 1000;
        reports.push(rep);
    }
    pass &= worst <= 1e-6;
    Ok((pass, format!("λ_min·δ deviates from 1 by at most {worst:.3e}"), json!({ "reports": reports, "max_deviation": worst })))
}

fn hardy_littlewood(seed: u64) -> Outcome {
    let rep = verify_hardy_littlewood(&GProfile::Power { p: 0.5 }, (0.0, 1.0), 1000, seed)?;
    let control = verify_hardy_littlewood(&GProfile::InverseLog { p: 1.0 }, (0.0, 0.5), 10, seed);
    let control_ok = matches!(control, Err(Error::Divergent(_)));
    let pass = rep.c_fit <= 1.0 + 1e-6 && control_ok;
    Ok((
        pass,
        format!("C_fit = {:.9}; non-integrable G {}", rep.c_fit, if control_ok { "rejected" } else { "accepted" }),
        json!({ "report": rep, "divergent_control_rejected": control_ok }),
    ))
}

fn disc_reach(disc: &AnalyticDisc, w: &[Complex64]) -> f64 {
    (0..64)
        .map(|k| {
            let p = disc.eval(Complex64::from_polar(disc.scale, k as f64 * std::f64::consts::TAU / 64.0));
            crate::field::dist(&p, w)
        })
        .fold(0.0, f64::max)
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Point {
    loop {
        let p: Point = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let r = norm(&p);
        if r > 1e-3 && r < 1.0 {
            return p.iter().map(|c| c * radius).collect();
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
