//! Command-line front end. Every subcommand prints one JSON report on stdout
//! and, when an output directory is known, writes it (plus any CSV) there.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::acceptance::{run_all, run_criterion, AcceptanceOptions, AcceptanceReport};
use crate::bumping::{calibrate, verify_bumping, verify_peak, BumpingAssembly, BumpingParams, CalibrationOptions, VerifyOptions};
use crate::domains::{ModelDomain, Shape};
use crate::field::{from_real, Point};
use crate::holomaps::{measure_modulus, predicted_rate, verify_hardy_littlewood, GProfile, HoloMap};
use crate::metric::{default_rate_grid, estimate_metric, MetricEstimate, PeakModel, UpperOptions};
use crate::quad::QuadOptions;
use crate::rates::{RateFunction, RateSpec};
use crate::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "KOBALAB_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kobalab", version, about = "Bumping functions, peak functions and Kobayashi metric estimates on model domains")]
pub struct Cli {
    /// Random seed for every sampler.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Sample or evaluation budget.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    /// Tolerance override (Levi-form positivity for verifiers, relative
    /// quadrature tolerance for rate transforms).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Output directory; defaults to $KOBALAB_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate transforms g, G(1/t), f̃ and h at the given t.
    Rates {
        /// Rate function, e.g. `power:0.5`, `logpower:2`.
        #[arg(long)]
        f: Option<String>,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Calibrate bumping parameters on a domain.
    Calibrate {
        #[arg(long)]
        domain: Option<String>,
        /// Calibrate the bumping properties only.
        #[arg(long)]
        bumping_only: bool,
    },
    /// Check the bumping properties at one boundary point.
    VerifyBumping(VerifyArgs),
    /// Check the peak-function properties at one boundary point.
    VerifyPeak(VerifyArgs),
    /// Upper and lower estimates of the metric at one point.
    EstimateMetric {
        #[arg(long)]
        domain: Option<String>,
        /// Flat real coordinates re₁,im₁,re₂,im₂,…
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        direction: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        /// Calibrate a peak model and add the lower bounds.
        #[arg(long)]
        lower: bool,
    },
    /// Estimates along a boundary-approach ray; emits CSV.
    Sweep {
        #[arg(long)]
        domain: Option<String>,
        /// `normal`, `tangential` or flat real coordinates of the direction.
        #[arg(long, allow_hyphen_values = true)]
        ray: Option<String>,
        /// Boundary point the ray approaches; defaults to the domain's base point.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        base: Option<Vec<f64>>,
        /// Strictly decreasing distances.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1)]
        degree: usize,
    },
    /// Predicted Hölder modulus table for proper maps.
    HolderRate {
        #[arg(long)]
        f: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, value_delimiter = ',')]
        t: Option<Vec<f64>>,
    },
    /// Hardy–Littlewood extremal construction for a profile G.
    VerifyHl {
        /// `power:P` or `invlog:P`.
        #[arg(long = "G")]
        big_g: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,1")]
        interval: Vec<f64>,
    },
    /// Measured modulus of continuity of a holomorphic map.
    MeasureModulus {
        /// `identity[:n]`, `blaschke[:a]` or `square`.
        #[arg(long)]
        map: String,
        #[arg(long)]
        f: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
    },
    /// Run the acceptance suite.
    Accept {
        /// Run a single criterion in 1..=11.
        #[arg(long)]
        criterion: Option<usize>,
        /// Skip the determinism rerun.
        #[arg(long)]
        no_determinism: bool,
    },
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub domain: Option<String>,
    /// Boundary point as flat real coordinates; defaults to the base point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub w: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
}

/// Boundary-approach ray: points `w + δ·ν` with `ν` the inward normal at `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayConfig {
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    /// `normal`, `tangential` or flat real coordinates.
    #[serde(default = "default_direction")]
    pub direction: Value,
    pub deltas: Vec<f64>,
}

fn default_direction() -> Value {
    Value::String("tangential".into())
}

/// Experiment configuration file. Command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub rate: Option<RateSpec>,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub rays: Vec<RayConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that names resolve and that every δ list is strictly decreasing and positive.
    pub fn validate(&self) -> Result<()> {
        let domain = as_usage(self.domain.as_deref().map(ModelDomain::parse).transpose())?;
        if let Some(spec) = &self.rate {
            as_usage(RateFunction::from_spec(spec))?;
        }
        if let Some(t) = self.tol {
            positive("tol", t)?;
        }
        for ray in &self.rays {
            check_deltas(&ray.deltas)?;
            if let Some(d) = &domain {
                let w = match &ray.base {
                    Some(b) => parse_point(b, d.dim(), "base")?,
                    None => d.base_point(),
                };
                ray_direction(d, &w, &ray.direction)?;
            }
        }
        Ok(())
    }
}

/// Errors from parsing command-line text are usage errors.
fn as_usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Usage(_) => e,
        other => Error::Usage(other.to_string()),
    })
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{what} must be positive, got {v}")))
    }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::Usage("empty delta list".into()));
    }
    for &d in deltas {
        positive("delta", d)?;
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Usage("delta list must be strictly decreasing".into()));
    }
    Ok(())
}

fn parse_point(coords: &[f64], dim: usize, what: &str) -> Result<Point> {
    if coords.len() != 2 * dim {
        return Err(Error::Usage(format!("{what} needs {} real coordinates, got {}", 2 * dim, coords.len())));
    }
    if coords.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage(format!("{what} has non-finite coordinates")));
    }
    Ok(from_real(&DVector::from_column_slice(coords)))
}

/// Metric direction for a ray at boundary point `w`: the inward normal, a
/// complex tangent vector, or an explicit vector.
fn ray_direction(d: &ModelDomain, w: &[Complex64], spec: &Value) -> Result<Point> {
    let normal = d.unit_normal(w)?;
    match spec {
        Value::String(s) if s == "normal" => Ok(normal),
        Value::String(s) if s == "tangential" => {
            if d.dim() < 2 {
                return Err(Error::Usage(format!("{} has no complex tangent directions", d.name())));
            }
            let k = (0..d.dim())
                .min_by(|&a, &b| normal[a].norm().total_cmp(&normal[b].norm()))
                .unwrap_or(0);
            let mut e = vec![Complex64::new(0.0, 0.0); d.dim()];
            e[k] = Complex64::new(1.0, 0.0);
            let proj: Complex64 = normal.iter().zip(&e).map(|(n, v)| n.conj() * v).sum();
            let t: Point = e.iter().zip(&normal).map(|(v, n)| v - proj * n).collect();
            let len = t.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            Ok(t.iter().map(|v| v / len).collect())
        }
        Value::String(s) => {
            let coords: Vec<f64> = s
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Usage(format!("bad direction `{s}`"))))
                .collect::<Result<_>>()?;
            parse_point(&coords, d.dim(), "direction")
        }
        Value::Array(_) => {
            let coords: Vec<f64> =
                serde_json::from_value(spec.clone()).map_err(|e| Error::Usage(format!("direction: {e}")))?;
            parse_point(&coords, d.dim(), "direction")
        }
        other => Err(Error::Usage(format!("unsupported direction {other}"))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub t: f64,
    pub f: f64,
    pub g: f64,
    /// Quadrature error estimate of `1/g`.
    pub g_error: f64,
    #[serde(rename = "G_at_1_over_t")]
    pub big_g_at_inverse: f64,
    /// Absent when `f̃` diverges for this rate.
    pub f_tilde: Option<f64>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesReport {
    pub rate: RateSpec,
    pub gamma: f64,
    pub eta: f64,
    pub rows: Vec<RateRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub measured_delta: Option<f64>,
    pub lower_peak: Option<f64>,
    pub lower_rate: Option<f64>,
    pub upper: f64,
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRay {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub domain: String,
    pub seed: u64,
    pub params: BumpingParams,
    pub approach_constant: f64,
    pub c_hat: f64,
    pub rays: Vec<SweepRay>,
}

/// Result of a subcommand: report, CSV artifact and whether all checks passed.
struct Outcome {
    name: &'static str,
    report: Value,
    csv: Option<String>,
    pass: bool,
}

fn outcome<T: Serialize>(name: &'static str, report: &T, pass: bool) -> Result<Outcome> {
    let report = serde_json::to_value(report).map_err(|e| Error::Evaluation(e.to_string()))?;
    Ok(Outcome { name, report, csv: None, pass })
}

/// Machine-readable error report.
pub fn error_report(e: &Error) -> Value {
    json!({ "error": { "code": e.code(), "message": e.to_string() } })
}

/// Parses `argv` (including the program name), runs the command and writes
/// the JSON report to `stdout`. Returns the process exit code.
pub fn run_command<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match execute(&cli) {
        Ok((out, dir)) => match emit(&out, dir.as_deref(), stdout) {
            Ok(()) => {
                if out.pass {
                    EXIT_OK
                } else {
                    EXIT_FAILURE
                }
            }
            Err(e) => fail(&e, stdout, stderr),
        },
        Err(e) => fail(&e, stdout, stderr),
    }
}

fn fail(e: &Error, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&error_report(e)).unwrap_or_default());
    let _ = writeln!(stderr, "kobalab: {e}");
    if matches!(e, Error::Usage(_)) {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

fn emit(out: &Outcome, dir: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let text = serde_json::to_string_pretty(&out.report).map_err(|e| Error::Evaluation(e.to_string()))?;
    let io = |e: std::io::Error| Error::Evaluation(format!("write failed: {e}"));
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(format!("{}.json", out.name)), format!("{text}\n")).map_err(io)?;
        if let Some(csv) = &out.csv {
            std::fs::write(dir.join(format!("{}.csv", out.name)), csv).map_err(io)?;
        }
    }
    writeln!(stdout, "{text}").map_err(io)
}

struct Settings {
    config: ExperimentConfig,
    seed: u64,
    budget: Option<usize>,
    tol: Option<f64>,
}

impl Settings {
    fn domain(&self, flag: &Option<String>) -> Result<ModelDomain> {
        match flag.as_deref().or(self.config.domain.as_deref()) {
            Some(name) => as_usage(ModelDomain::parse(name)),
            None => Err(Error::Usage("--domain is required".into())),
        }
    }

    fn rate(&self, flag: &Option<String>) -> Result<RateFunction> {
        let f = match (flag, &self.config.rate) {
            (Some(text), _) => as_usage(RateFunction::parse(text))?,
            (None, Some(spec)) => as_usage(RateFunction::from_spec(spec))?,
            (None, None) => return Err(Error::Usage("--f is required".into())),
        };
        Ok(match self.tol {
            Some(t) => f.with_quadrature(QuadOptions { rel_tol: t, ..Default::default() }),
            None => f,
        })
    }

    fn verify(&self, default_budget: usize) -> VerifyOptions {
        let mut v = VerifyOptions { seed: self.seed, budget: self.budget.unwrap_or(default_budget), ..Default::default() };
        if let Some(t) = self.tol {
            v.tol = t;
        }
        v
    }
}

fn execute(cli: &Cli) -> Result<(Outcome, Option<PathBuf>)> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for (what, v) in [("budget", cli.budget.or(config.budget))] {
        if v == Some(0) {
            return Err(Error::Usage(format!("{what} must be positive")));
        }
    }
    if let Some(t) = cli.tol {
        positive("tol", t)?;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output.clone())
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let s = Settings {
        seed: cli.seed.unwrap_or(config.seed),
        budget: cli.budget.or(config.budget),
        tol: cli.tol.or(config.tol),
        config,
    };
    let out = match &cli.command {
        Command::Rates { f, t, gamma, eta } => rates(&s, f, t, *gamma, *eta)?,
        Command::Calibrate { domain, bumping_only } => {
            let d = s.domain(domain)?;
            let opts = CalibrationOptions { verify: s.verify(1000), require_peak: !bumping_only, ..Default::default() };
            outcome("calibrate", &calibrate(&d, &opts)?, true)?
        }
        Command::VerifyBumping(a) => {
            let (asm, w) = assembly(&s, a)?;
            let rep = verify_bumping(&asm, &w, &s.verify(1000))?;
            outcome("verify-bumping", &rep, rep.pass)?
        }
        Command::VerifyPeak(a) => {
            let (asm, w) = assembly(&s, a)?;
            let rep = verify_peak(&asm, &w, &s.verify(1000))?;
            outcome("verify-peak", &rep, rep.pass)?
        }
        Command::EstimateMetric { domain, point, direction, degree, lower } => {
            let d = s.domain(domain)?;
            let z = parse_point(point, d.dim(), "point")?;
            let x = parse_point(direction, d.dim(), "direction")?;
            let opts = upper_options(&s, *degree)?;
            let model = if *lower { Some(peak_model(&s, &d)?) } else { None };
            let est = estimate_metric(&d, &z, &x, &opts, model.as_ref().map(|(m, c)| (m, *c)))?;
            outcome("estimate-metric", &est, true)?
        }
        Command::Sweep { domain, ray, base, deltas, degree } => sweep(&s, domain, ray, base, deltas, *degree)?,
        Command::HolderRate { f, eta, t } => {
            let spec = predicted_rate(&s.rate(f)?, *eta)?;
            let ts = t.clone().unwrap_or_else(|| (0..=12).map(|k| 10f64.powf(1.0 + 0.25 * k as f64)).collect());
            let rows = spec.table(&ts)?;
            let mut csv = String::from("t,h,h_direct\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{}\n", r.t, r.h, r.h_direct));
            }
            let mut o = outcome("holder-rate", &json!({ "rate": spec.rate.spec(), "eta": spec.eta, "rows": rows }), true)?;
            o.csv = Some(csv);
            o
        }
        Command::VerifyHl { big_g, interval } => {
            let g = as_usage(GProfile::parse(big_g))?;
            let &[a, b] = interval.as_slice() else {
                return Err(Error::Usage("--interval takes two numbers".into()));
            };
            let rep = verify_hardy_littlewood(&g, (a, b), s.budget.unwrap_or(1000), s.seed)?;
            outcome("verify-hl", &rep, rep.c_fit.is_finite())?
        }
        Command::MeasureModulus { map, f, eta } => {
            let map = as_usage(HoloMap::parse(map))?;
            let f = match (f, &s.config.rate) {
                (None, None) => RateFunction::power(0.5)?,
                _ => s.rate(f)?,
            };
            let rate = predicted_rate(&f, *eta)?;
            let rep = measure_modulus(map, &rate, s.budget.unwrap_or(1000), s.seed)?;
            outcome("measure-modulus", &rep, rep.predicted_constant.is_finite())?
        }
        Command::Accept { criterion, no_determinism } => match criterion {
            Some(id) => {
                let c = run_criterion(*id, s.seed)?;
                let rep = AcceptanceReport { seed: s.seed, pass: c.pass, criteria: vec![c] };
                outcome("accept", &rep, rep.pass)?
            }
            None => {
                let rep = run_all(&AcceptanceOptions { seed: s.seed, determinism: !no_determinism });
                outcome("accept", &rep, rep.pass)?
            }
        },
    };
    Ok((out, dir))
}

fn rates(s: &Settings, f: &Option<String>, ts: &[f64], gamma: f64, eta: f64) -> Result<Outcome> {
    positive("gamma", gamma)?;
    positive("eta", eta)?;
    let rate = s.rate(f)?;
    let tilde = rate.f_tilde_integrable();
    let mut rows = Vec::with_capacity(ts.len());
    let mut csv = String::from("t,f,g,G_at_1_over_t,f_tilde,h\n");
    for &t in ts {
        let (tail, err) = rate.tail_integral_log(t.ln())?;
        let row = RateRow {
            t,
            f: rate.eval(t)?,
            g: rate.g(t)?,
            g_error: err / (tail * tail),
            big_g_at_inverse: rate.big_g(gamma, 1.0 / t)?,
            f_tilde: if tilde { Some(rate.f_tilde(t)?) } else { None },
            h: if tilde { Some(rate.holder_rate_h(eta, t)?) } else { None },
        };
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.t,
            row.f,
            row.g,
            row.big_g_at_inverse,
            cell(row.f_tilde),
            cell(row.h)
        ));
        rows.push(row);
    }
    let mut o = outcome("rates", &RatesReport { rate: rate.spec(), gamma, eta, rows }, true)?;
    o.csv = Some(csv);
    Ok(o)
}

fn assembly(s: &Settings, a: &VerifyArgs) -> Result<(BumpingAssembly, Point)> {
    let d = s.domain(&a.domain)?;
    let def = BumpingParams::default();
    let params = BumpingParams {
        gamma: a.gamma.unwrap_or(def.gamma),
        epsilon: a.epsilon.unwrap_or(def.epsilon),
        l: a.l.unwrap_or(def.l),
        eta: a.eta.unwrap_or(def.eta),
        ..def
    };
    params.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let w = match &a.w {
        Some(c) => parse_point(c, d.dim(), "w")?,
        None => d.base_point(),
    };
    Ok((BumpingAssembly::new(d, params)?, w))
}

fn upper_options(s: &Settings, degree: usize) -> Result<UpperOptions> {
    if degree == 0 {
        return Err(Error::Usage("--degree must be at least 1".into()));
    }
    Ok(UpperOptions { degree, budget: s.budget.unwrap_or(UpperOptions::default().budget), ..Default::default() })
}

/// Calibrated peak model and its rate constant. Convex domains calibrate
/// the peak checks too; elsewhere only the bumping checks are calibrated
/// and the approach constant is read off one `verify_peak` run.
fn peak_model(s: &Settings, d: &ModelDomain) -> Result<(PeakModel, f64)> {
    let convex = matches!(d.shape(), Shape::Disc | Shape::Ball { .. });
    let verify = s.verify(if convex { 1000 } else { 4000 });
    let opts = CalibrationOptions { verify, require_peak: convex, ..Default::default() };
    let rep = calibrate(d, &opts)?;
    let a = BumpingAssembly::new(d.clone(), rep.params)?;
    let model = if convex {
        PeakModel::from_reports(a, &rep.peak)?
    } else {
        let peak = verify_peak(&a, &d.base_point(), &verify)?;
        PeakModel::from_reports(a, &[peak])?
    };
    let c_hat = model.rate_constant(&default_rate_grid())?;
    Ok((model, c_hat))
}

fn sweep(
    s: &Settings,
    domain: &Option<String>,
    ray: &Option<String>,
    base: &Option<Vec<f64>>,
    deltas: &Option<Vec<f64>>,
    degree: usize,
) -> Result<Outcome> {
    let d = s.domain(domain)?;
    let rays: Vec<RayConfig> = if ray.is_some() || deltas.is_some() || s.config.rays.is_empty() {
        let deltas = deltas.clone().unwrap_or_else(|| (2..=14).map(|k| 2f64.powi(-k)).collect());
        vec![RayConfig {
            base: base.clone(),
            direction: Value::String(ray.clone().unwrap_or_else(|| "tangential".into())),
            deltas,
        }]
    } else {
        s.config.rays.clone()
    };
    let mut prepared = Vec::new();
    for r in &rays {
        check_deltas(&r.deltas)?;
        let w = match &r.base {
            Some(b) => parse_point(b, d.dim(), "base")?,
            None => d.base_point(),
        };
        let x = ray_direction(&d, &w, &r.direction)?;
        prepared.push((w, x, r.deltas.clone()));
    }
    let opts = upper_options(s, degree)?;
    let (model, c_hat) = peak_model(s, &d)?;
    let mut out = Vec::new();
    let mut csv = String::from("delta,lower_peak,lower_rate,upper,exact_or_blank\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for (w, x, deltas) in prepared {
        let inward: Point = d.unit_normal(&w)?.iter().map(|v| -v).collect();
        let mut rows = Vec::new();
        for delta in deltas {
            let z: Point = w.iter().zip(&inward).map(|(a, n)| a + n * delta).collect();
            let e: MetricEstimate = estimate_metric(&d, &z, &x, &opts, Some((&model, c_hat)))?;
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                delta,
                cell(e.lower_peak),
                cell(e.lower_rate),
                e.upper,
                cell(e.exact)
            ));
            rows.push(SweepRow {
                delta,
                measured_delta: e.delta,
                lower_peak: e.lower_peak,
                lower_rate: e.lower_rate,
                upper: e.upper,
                exact: e.exact,
            });
        }
        out.push(SweepRay {
            base: crate::field::to_real(&w).as_slice().to_vec(),
            direction: crate::field::to_real(&x).as_slice().to_vec(),
            rows,
        });
    }
    let report = SweepReport {
        domain: d.name(),
        seed: s.seed,
        params: *model.assembly().params(),
        approach_constant: model.approach_constant(),
        c_hat,
        rays: out,
    };
    let mut o = outcome("sweep", &report, true)?;
    o.csv = Some(csv);
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_command(std::iter::once("kobalab").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap())
    }

    #[test]
    fn rates_example() {
        let (code, out) = run(&["rates", "--f", "power:0.5", "--t", "4"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["rows"][0]["g"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(&["rates", "--f", "nonsense:1", "--t", "4"]).0, 2);
        assert_eq!(run(&["frobnicate"]).0, 2);
        assert_eq!(run(&["estimate-metric", "--domain", "ball", "--point", "0.5,0", "--direction", "1,0,0,0"]).0, 2);
    }

    #[test]
    fn module_errors_carry_codes() {
        let (code, out) = run(&["verify-hl", "--G", "invlog:1", "--interval", "0,0.5"]);
        assert_eq!(code, 1);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["error"]["code"], "divergent_integral");
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::from_json(r#"{"domain":"D2","rays":[{"deltas":[0.1,0.01]}]}"#).is_ok());
        assert!(ExperimentConfig::from_json(r#"{"rays":[{"deltas":[0.01,0.1]}]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"rays":[{"deltas":[0.1,-0.01]}]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"domain":"D9"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"domain":"D1","rays":[{"deltas":[0.1]}]}"#).is_err());
        assert_eq!(ExperimentConfig::from_json("{}").unwrap().seed, 0);
    }

    #[test]
    fn tangential_direction_is_orthogonal_to_the_normal() {
        let d = ModelDomain::finite_graph(2).unwrap();
        let w = d.base_point();
        let t = ray_direction(&d, &w, &Value::String("tangential".into())).unwrap();
        let n = d.unit_normal(&w).unwrap();
        let ip: Complex64 = n.iter().zip(&t).map(|(a, b)| a.conj() * b).sum();
        assert!(ip.norm() < 1e-12);
    }
}
