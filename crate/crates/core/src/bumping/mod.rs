//! The global function `Φ`, the bumping function `ρ(z, w)` and the peak
//! function `ψ_w`, with numerical verification and parameter calibration.

mod verify;


pub use verify::{
    calibrate, sample_interior, sample_level_set, sample_shell, verify_bumping, verify_peak, CalibrationOptions,
    CalibrationReport, Check, PeakReport, PropertyReport, VerifyOptions,
};

use crate::cutoff::CutoffChi;
use crate::domains::ModelDomain;
use crate::error::{Error, Result};
use crate::field::{to_real, RealDerivs, ScalarField};
use crate::rates::GTable;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpingParams {
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta: f64,
    pub j_min: i32,
    pub j_max: i32,
}

impl Default for BumpingParams {
    fn default() -> Self {
        BumpingParams { gamma: 1.0, epsilon: 1.0 / 96.0, l: 1.0, eta: 0.5, j_min: 1, j_max: 200 }
    }
}

impl BumpingParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.epsilon > 0.0
            && self.l >= 0.0
            && self.eta > 0.0
            && self.eta <= 1.0
            && self.j_min <= self.j_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Usage(format!("invalid bumping parameters {self:?}")))
        }
    }
}

/// Smallest distance handled through the `G` table; closer distances fall
/// back to direct evaluation.
const G_TABLE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BumpingAssembly {
    domain: ModelDomain,
    params: BumpingParams,
    chi: CutoffChi,
    gtable: GTable,
}

impl BumpingAssembly {
    pub fn new(domain: ModelDomain, params: BumpingParams) -> Result<Self> {
        params.validate()?;
        let mut params = params;
        // the family is only defined for 1/δ above the rate's floor
        let t0 = domain.declared_rate().t0();
        while 2f64.powi(params.j_min) <= t0 {
            params.j_min += 1;
        }
        let gtable = GTable::build(domain.declared_rate(), params.gamma, G_TABLE_FLOOR)?;
        Ok(BumpingAssembly { domain, params, chi: CutoffChi::new(), gtable })
    }

    pub fn domain(&self) -> &ModelDomain {
        &self.domain
    }

    pub fn params(&self) -> &BumpingParams {
        &self.params
    }

    pub fn chi(&self) -> &CutoffChi {
        &self.chi
    }

    /// `(G, Ġ, G̈)` at distance `d ≥ 0`.
    pub fn big_g(&self, d: f64) -> Result<(f64, f64, f64)> {
        if d == 0.0 {
            return Ok((0.0, 0.0, 0.0));
        }
        self.gtable.derivs(d)
    }

    /// Indices `j ∈ [j_min, j_max]` whose cutoff `χ(2^j r)` can be nonzero.
    pub fn contributing_indices(&self, r: f64) -> Vec<i32> {
        if !(r > 0.0) {
            return Vec::new();
        }
        let k = (-r.log2()).floor() as i32;
        (k - 1..=k + 1)
            .filter(|&j| j >= self.params.j_min && j <= self.params.j_max)
            .filter(|&j| {
                let s = 2f64.powi(j) * r;
                s > 0.25 && s < 2.0
            })
            .collect()
    }

    fn phi_term(&self, j: i32, r: &RealDerivs, z: &[Complex64]) -> Result<RealDerivs> {
        let scale = 2f64.powi(j);
        let s = r.scale(scale);
        let chi = s.compose(self.chi.eval(s.value));
        if chi.value == 0.0 && chi.grad.iter().all(|&g| g == 0.0) && chi.hess.iter().all(|&h| h == 0.0) {
            return Ok(RealDerivs::constant(0.0, r.grad.len()));
        }
        let phi = self.domain.family_derivs(1.0 / scale, self.domain.shift(), z)?;
        let e = phi.value.exp();
        let bump = phi.compose((e - 1.0, e, e));
        Ok(bump.mul(&chi))
    }

    fn check_strip(&self, r: f64) -> Result<()> {
        let top = 2f64.powi(1 - self.params.j_min);
        if r >= top {
            return Err(Error::OutOfRange {
                value: r,
                reason: format!("Φ is assembled only for r < {top}"),
            });
        }
        Ok(())
    }

    /// `Φ` with real derivatives, from the three-term local sum. Zero on `r ≤ 0`.
    pub fn phi_global(&self, z: &[Complex64]) -> Result<RealDerivs> {
        let r = self.domain.r_derivs_unchecked(z);
        let m = r.grad.len();
        if r.value <= 0.0 {
            return Ok(RealDerivs::constant(0.0, m));
        }
        self.check_strip(r.value)?;
        let mut acc = RealDerivs::constant(0.0, m);
        for j in self.contributing_indices(r.value) {
            acc = acc.add(&self.phi_term(j, &r, z)?);
        }
        Ok(acc)
    }

    /// `Φ` summed over every index in `[j_min, j_max]`.
    pub fn phi_global_full(&self, z: &[Complex64]) -> Result<f64> {
        let r = self.domain.r_derivs_unchecked(z);
        if r.value <= 0.0 {
            return Ok(0.0);
        }
        self.check_strip(r.value)?;
        let mut acc = 0.0;
        for j in self.params.j_min..=self.params.j_max {
            acc += self.phi_term(j, &r, z)?.value;
        }
        Ok(acc)
    }

    fn distance_derivs(z: &[Complex64], w: &[Complex64]) -> RealDerivs {
        let x = to_real(z) - to_real(w);
        let m = x.len();
        let d = x.norm();
        if d == 0.0 {
            return RealDerivs::constant(0.0, m);
        }
        let u = &x / d;
        RealDerivs {
            value: d,
            grad: u.clone(),
            hess: (DMatrix::identity(m, m) - &u * u.transpose()) / d,
        }
    }

    /// `ρ(z, w) = r(z) + G(|z − w|)(−1 + εΦ(z))` with `z`-derivatives.
    pub fn rho_derivs(&self, z: &[Complex64], w: &[Complex64]) -> Result<RealDerivs> {
        let r = self.domain.r_derivs_unchecked(z);
        let dist = Self::distance_derivs(z, w);
        let g = if dist.value == 0.0 {
            RealDerivs::constant(0.0, r.grad.len())
        } else {
            dist.compose(self.big_g(dist.value)?)
        };
        let mut factor = self.phi_global(z)?.scale(self.params.epsilon);
        factor.value -= 1.0;
        Ok(r.add(&g.mul(&factor)))
    }

    pub fn rho(&self, z: &[Complex64], w: &[Complex64]) -> Result<f64> {
        Ok(self.rho_derivs(z, w)?.value)
    }

    /// `ψ_w(z) = −(−ρ(z, w) e^{L|z−w|²})^η` with derivatives.
    pub fn psi_derivs(&self, z: &[Complex64], w: &[Complex64]) -> Result<RealDerivs> {
        let rho = self.rho_derivs(z, w)?;
        if rho.value >= 0.0 {
            return Err(Error::NonNegativeRho(rho.value));
        }
        let x = to_real(z) - to_real(w);
        let m = x.len();
        let l = self.params.l;
        let sq = RealDerivs {
            value: l * x.norm_squared(),
            grad: &x * (2.0 * l),
            hess: DMatrix::identity(m, m) * (2.0 * l),
        };
        let e = sq.value.exp();
        let p = rho.scale(-1.0).mul(&sq.compose((e, e, e)));
        let eta = self.params.eta;
        let pv = p.value;
        Ok(p.compose((
            -pv.powf(eta),
            -eta * pv.powf(eta - 1.0),
            -eta * (eta - 1.0) * pv.powf(eta - 2.0),
        )))
    }

    pub fn peak_psi(&self, z: &[Complex64], w: &[Complex64]) -> Result<f64> {
        Ok(self.psi_derivs(z, w)?.value)
    }

    /// `ρ(·, w)` as a field.
    pub fn rho_field<'a>(&'a self, w: &'a [Complex64]) -> RhoField<'a> {
        RhoField { assembly: self, w }
    }

    /// `ψ_w` as a field.
    pub fn psi_field<'a>(&'a self, w: &'a [Complex64]) -> PsiField<'a> {
        PsiField { assembly: self, w }
    }

    /// `Φ` as a field.
    pub fn phi_field(&self) -> PhiField<'_> {
        PhiField { assembly: self }
    }
}

pub struct RhoField<'a> {
    assembly: &'a BumpingAssembly,
    w: &'a [Complex64],
}

impl ScalarField for RhoField<'_> {
    fn dim(&self) -> usize {
        self.assembly.domain.dim()
    }
    fn value(&self, z: &[Complex64]) -> Result<f64> {
        self.assembly.rho(z, self.w)
    }
    fn derivs(&self, z: &[Complex64]) -> Option<Result<RealDerivs>> {
        Some(self.assembly.rho_derivs(z, self.w))
    }
}

pub struct PsiField<'a> {
    assembly: &'a BumpingAssembly,
    w: &'a [Complex64],
}

impl ScalarField for PsiField<'_> {
    fn dim(&self) -> usize {
        self.assembly.domain.dim()
    }
    fn value(&self, z: &[Complex64]) -> Result<f64> {
        self.assembly.peak_psi(z, self.w)
    }
    fn derivs(&self, z: &[Complex64]) -> Option<Result<RealDerivs>> {
        Some(self.assembly.psi_derivs(z, self.w))
    }
}

pub struct PhiField<'a> {
    assembly: &'a BumpingAssembly,
}

impl ScalarField for PhiField<'_> {
    fn dim(&self) -> usize {
        self.assembly.domain.dim()
    }
    fn value(&self, z: &[Complex64]) -> Result<f64> {
        Ok(self.assembly.phi_global(z)?.value)
    }
    fn derivs(&self, z: &[Complex64]) -> Option<Result<RealDerivs>> {
        Some(self.assembly.phi_global(z))
    }
}
