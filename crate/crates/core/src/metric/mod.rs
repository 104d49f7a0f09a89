//! Kobayashi metric estimates: disc upper bounds, peak-function lower
//! bounds and closed forms on the disc and the ball.

mod disc;
mod lower;
mod upper;

pub use disc::{disc_feasible, AnalyticDisc, Feasibility, MARGIN_FLOOR};
pub use lower::{
    default_rate_grid, exact_metric, lower_bound_peak, lower_bound_rate, max_norm, mean_value_check, MeanValueReport, PeakBound,
    PeakModel, RateBound,
};
pub use upper::{canonical_direction, kobayashi_upper, slice_disc, UpperBound, UpperOptions, SLICE_DISC_DEGREE};

use num_complex::Complex64;
use serde::Serialize;

use crate::domains::{ModelDomain, Shape};
use crate::field::to_real;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct MetricEstimate {
    pub domain: String,
    pub point: Vec<f64>,
    pub direction: Vec<f64>,
    pub delta: Option<f64>,
    pub upper: f64,
    pub upper_source: &'static str,
    pub lower_peak: Option<f64>,
    pub lower_rate: Option<f64>,
    pub c_hat: Option<f64>,
    pub exact: Option<f64>,
    pub notes: Vec<String>,
}

/// All available estimates of `K(z, X)`. The lower bounds need a fitted
/// peak model and its rate constant `ĉ`.
pub fn estimate_metric(
    domain: &ModelDomain,
    z: &[Complex64],
    x: &[Complex64],
    opts: &UpperOptions,
    peak: Option<(&PeakModel, f64)>,
) -> Result<MetricEstimate> {
    let upper = kobayashi_upper(domain, z, x, opts)?;
    let exact = match domain.shape() {
        Shape::Disc | Shape::Ball { .. } => Some(exact_metric(domain, z, x)?),
        _ => None,
    };
    let mut notes = Vec::new();
    let delta = domain.boundary_distance(z).ok();
    let (mut lower_peak, mut lower_rate, mut c_hat) = (None, None, None);
    if let (Some((model, c)), Some(d)) = (peak, delta) {
        match model.peak_bound(d, max_norm(x)) {
            Ok(b) => {
                if b.convex_repaired {
                    notes.push(format!("F1 replaced by its convex minorant (change {:.3e})", b.repair_change));
                }
                lower_peak = Some(b.value);
            }
            Err(e) => notes.push(format!("peak bound unavailable: {e}")),
        }
        lower_rate = Some(lower_bound_rate(domain, c, z, x)?.value);
        c_hat = Some(c);
    }
    if delta.is_none() {
        notes.push("boundary distance unavailable (nearest point not unique)".into());
    }
    Ok(MetricEstimate {
        domain: domain.name(),
        point: to_real(z).as_slice().to_vec(),
        direction: to_real(x).as_slice().to_vec(),
        delta,
        upper: upper.value,
        upper_source: upper.source,
        lower_peak,
        lower_rate,
        c_hat,
        exact,
        notes,
    })
}
