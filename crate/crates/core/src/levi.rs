//! Wirtinger derivatives, complex Hessians and Levi forms.

use crate::error::{Error, Result};
use crate::field::{from_real, to_real, RealDerivs, ScalarField};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// `∂u/∂z_j = ½(u_{x_j} − i u_{y_j})` from a real gradient.
pub fn complex_from_real_grad(grad: &DVector<f64>) -> Vec<Complex64> {
    grad.as_slice()
        .chunks(2)
        .map(|p| Complex64::new(0.5 * p[0], -0.5 * p[1]))
        .collect()
}

/// `∂²u/∂z_j∂z̄_k` from a real Hessian in `(x₁, y₁, …)` order.
pub fn complex_from_real_hess(h: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = h.nrows() / 2;
    DMatrix::from_fn(n, n, |j, k| {
        let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
        Complex64::new(
            0.25 * (h[(xj, xk)] + h[(yj, yk)]),
            0.25 * (h[(xj, yk)] - h[(yj, xk)]),
        )
    })
}

fn default_step(z: &[Complex64]) -> f64 {
    1e-4 * crate::field::norm(z).max(1.0)
}

fn eval_real(u: &dyn ScalarField, x: &DVector<f64>) -> Result<f64> {
    let v = u.value(&from_real(x))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("non-finite field value at {:?}", x.as_slice())))
    }
}

/// Central-difference real gradient with step `h`.
pub fn real_gradient_fd(u: &dyn ScalarField, z: &[Complex64], h: f64) -> Result<DVector<f64>> {
    let x = to_real(z);
    let m = x.len();
    let mut g = DVector::zeros(m);
    for i in 0..m {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (eval_real(u, &xp)? - eval_real(u, &xm)?) / (2.0 * h);
    }
    Ok(g)
}

/// Plain second-order central-difference real Hessian with step `h`.
pub fn real_hessian_fd(u: &dyn ScalarField, z: &[Complex64], h: f64) -> Result<DMatrix<f64>> {
    let x = to_real(z);
    let m = x.len();
    let f0 = eval_real(u, &x)?;
    let shifted = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
        let mut y = x.clone();
        y[i] += si * h;
        y[j] += sj * h;
        eval_real(u, &y)
    };
    let mut hess = DMatrix::zeros(m, m);
    for i in 0..m {
        hess[(i, i)] = (shifted(i, 1.0, i, 0.0)? - 2.0 * f0 + shifted(i, -1.0, i, 0.0)?) / (h * h);
        for j in 0..i {
            let v = (shifted(i, 1.0, j, 1.0)? - shifted(i, 1.0, j, -1.0)? - shifted(i, -1.0, j, 1.0)?
                + shifted(i, -1.0, j, -1.0)?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// A complex Hessian with its provenance and error estimate.
#[derive(Debug, Clone)]
pub struct ComplexHessian {
    pub matrix: DMatrix<Complex64>,
    /// Step used by finite differences, `None` for analytic derivatives.
    pub step: Option<f64>,
    /// Richardson error estimate (max entry), zero for analytic derivatives.
    pub error_estimate: f64,
}

fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Finite-difference complex Hessian: steps `h` and `h/2` combined by one
/// Richardson level, then symmetrized to be exactly Hermitian.
pub fn complex_hessian_fd(u: &dyn ScalarField, z: &[Complex64], step: Option<f64>) -> Result<ComplexHessian> {
    let h = step.unwrap_or_else(|| default_step(z));
    if !(h > 0.0) {
        return Err(Error::FiniteDifference(format!("step {h} must be positive")));
    }
    let coarse = real_hessian_fd(u, z, h)?;
    let fine = real_hessian_fd(u, z, 0.5 * h)?;
    let extrap = (&fine * 4.0 - &coarse) / 3.0;
    let err = (&fine - &coarse).amax() / 3.0;
    let scale = extrap.amax().max(1.0);
    if !err.is_finite() || err > 1e-2 * scale {
        return Err(Error::FiniteDifference(format!(
            "Hessian estimates at steps {h} and {} differ by {err}",
            0.5 * h
        )));
    }
    Ok(ComplexHessian {
        matrix: hermitize(&complex_from_real_hess(&extrap)),
        step: Some(h),
        error_estimate: err,
    })
}

/// Complex Hessian, analytic when the field provides derivatives.
pub fn complex_hessian(u: &dyn ScalarField, z: &[Complex64]) -> Result<ComplexHessian> {
    match u.derivs(z) {
        Some(d) => Ok(ComplexHessian {
            matrix: hermitize(&complex_from_real_hess(&d?.hess)),
            step: None,
            error_estimate: 0.0,
        }),
        None => complex_hessian_fd(u, z, None),
    }
}

/// Complex gradient `(∂u/∂z_j)`, analytic when available.
pub fn complex_gradient(u: &dyn ScalarField, z: &[Complex64]) -> Result<Vec<Complex64>> {
    match u.derivs(z) {
        Some(d) => Ok(complex_from_real_grad(&d?.grad)),
        None => {
            let h = default_step(z);
            let g1 = real_gradient_fd(u, z, h)?;
            let g2 = real_gradient_fd(u, z, 0.5 * h)?;
            Ok(complex_from_real_grad(&((&g2 * 4.0 - &g1) / 3.0)))
        }
    }
}

pub fn derivs_or_fd(u: &dyn ScalarField, z: &[Complex64]) -> Result<RealDerivs> {
    if let Some(d) = u.derivs(z) {
        return d;
    }
    let h = default_step(z);
    let g1 = real_gradient_fd(u, z, h)?;
    let g2 = real_gradient_fd(u, z, 0.5 * h)?;
    let h1 = real_hessian_fd(u, z, h)?;
    let h2 = real_hessian_fd(u, z, 0.5 * h)?;
    Ok(RealDerivs {
        value: u.value(z)?,
        grad: (&g2 * 4.0 - &g1) / 3.0,
        hess: (&h2 * 4.0 - &h1) / 3.0,
    })
}

/// `Σ H_jk X_j X̄_k` for a Hermitian matrix.
pub fn hermitian_form(h: &DMatrix<Complex64>, x: &[Complex64]) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..x.len() {
        for k in 0..x.len() {
            s += h[(j, k)] * x[j] * x[k].conj();
        }
    }
    s.re
}

pub fn levi_form(u: &dyn ScalarField, z: &[Complex64], x: &[Complex64]) -> Result<f64> {
    if x.len() != u.dim() {
        return Err(Error::Usage(format!("vector has length {}, expected {}", x.len(), u.dim())));
    }
    Ok(hermitian_form(&complex_hessian(u, z)?.matrix, x))
}

/// Cyclic Jacobi eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= 1e-30 * diag.max(1e-300) || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of a Hermitian matrix, ascending, via its real embedding
/// `[[A, −B], [B, A]]` whose spectrum is that of `A + iB` doubled.
pub fn hermitian_eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
    let n = h.nrows();
    let emb = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let c = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => c.re,
            (true, false) => -c.im,
            (false, true) => c.im,
        }
    });
    symmetric_eigenvalues(&emb).into_iter().step_by(2).collect()
}

pub fn min_levi_eigenvalue(u: &dyn ScalarField, z: &[Complex64]) -> Result<f64> {
    Ok(hermitian_eigenvalues(&complex_hessian(u, z)?.matrix)[0])
}

/// Orthonormal basis of the complex tangent space `{X : Σ ∂ρ/∂z_j X_j = 0}`.
pub fn tangential_basis(rho: &dyn ScalarField, z: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    let d = complex_gradient(rho, z)?;
    tangential_basis_from_gradient(&d)
}

pub fn tangential_basis_from_gradient(d: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
    let n = d.len();
    let dn = crate::field::norm(d);
    if dn < 1e-8 {
        return Err(Error::DegenerateGradient(dn));
    }
    // the constraint is ⟨X, b⟩ = 0 with b = conj(∂ρ)
    let b: Vec<Complex64> = d.iter().map(|c| c.conj() / dn).collect();
    let inner = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
        x.iter().zip(y).map(|(a, c)| a * c.conj()).sum()
    };
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for k in 0..n {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[k] = Complex64::new(1.0, 0.0);
        for q in std::iter::once(&b).chain(basis.iter()) {
            let c = inner(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
        let nv = crate::field::norm(&v);
        if nv > 1e-6 {
            basis.push(v.into_iter().map(|c| c / nv).collect());
        }
    }
    for v in &basis {
        let res: Complex64 = v.iter().zip(d).map(|(x, g)| x * g).sum();
        if res.norm() > 1e-8 * dn.max(1.0) {
            return Err(Error::Consistency(format!("tangential residual {}", res.norm())));
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FnField;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gradient_of_real_part_and_modulus() {
        let u = FnField::new(1, |z: &[Complex64]| z[0].re);
        let g = complex_gradient(&u, &[c(0.3, -0.2)]).unwrap();
        assert!((g[0] - c(0.5, 0.0)).norm() < 1e-10);
        let u = FnField::new(2, |z: &[Complex64]| z[0].norm_sqr() + z[1].norm_sqr());
        let z = [c(0.1, 0.2), c(-0.3, 0.4)];
        let g = complex_gradient(&u, &z).unwrap();
        for j in 0..2 {
            assert!((g[j] - z[j].conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn quartic_levi_form() {
        // ∂²|z|⁴/∂z∂z̄ = 4|z|²
        let u = FnField::new(1, |z: &[Complex64]| z[0].norm_sqr().powi(2));
        let v = levi_form(&u, &[c(0.1, 0.0)], &[c(1.0, 0.0)]).unwrap();
        assert!((v - 0.04).abs() < 1e-8, "{v}");
    }

    #[test]
    fn indefinite_form_has_negative_eigenvalue() {
        let u = FnField::new(2, |z: &[Complex64]| z[0].norm_sqr() - z[1].norm_sqr());
        let e = min_levi_eigenvalue(&u, &[c(0.2, 0.1), c(0.0, 0.3)]).unwrap();
        assert!((e + 1.0).abs() < 1e-8);
    }

    #[test]
    fn scaled_ball_defining_function() {
        let delta = 0.05;
        let u = FnField::new(2, move |z: &[Complex64]| (z[0].norm_sqr() + z[1].norm_sqr() - 1.0) / delta);
        let z = [c(0.6, 0.1), c(0.2, -0.7)];
        let ev = hermitian_eigenvalues(&complex_hessian(&u, &z).unwrap().matrix);
        for e in ev {
            assert!((e - 20.0).abs() < 1e-5, "{e}");
        }
    }

    #[test]
    fn fd_hessian_is_second_order() {
        let u = FnField::new(1, |z: &[Complex64]| (z[0].re * 1.3).sin() * (z[0].im * 0.7).exp());
        let z = [c(0.4, 0.2)];
        let (x, y) = (0.4f64, 0.2f64);
        let exact = -1.69 * (1.3 * x).sin() * (0.7 * y).exp();
        let mut errs = Vec::new();
        for k in 0..4 {
            let h = 0.05 / 2f64.powi(k);
            errs.push((real_hessian_fd(&u, &z, h).unwrap()[(0, 0)] - exact).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
        }
    }

    #[test]
    fn levi_form_is_sesquilinear() {
        let u = FnField::new(2, |z: &[Complex64]| {
            z[0].norm_sqr().powi(2) + (z[0] * z[1].conj()).re + 0.5 * z[1].norm_sqr()
        });
        let z = [c(0.3, -0.1), c(0.2, 0.5)];
        let x = [c(0.7, 0.2), c(-0.4, 0.9)];
        let lam = c(0.3, -1.1);
        let base = levi_form(&u, &z, &x).unwrap();
        let scaled: Vec<_> = x.iter().map(|v| v * lam).collect();
        let v = levi_form(&u, &z, &scaled).unwrap();
        assert!((v - lam.norm_sqr() * base).abs() < 1e-7);
    }

    #[test]
    fn tangent_basis_annihilates_gradient() {
        let d = [c(0.3, 0.4), c(-0.1, 0.2)];
        let b = tangential_basis_from_gradient(&d).unwrap();
        assert_eq!(b.len(), 1);
        assert!(tangential_basis_from_gradient(&[c(0.0, 0.0), c(1e-10, 0.0)]).is_err());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let ev = symmetric_eigenvalues(&a);
        let s = 2f64.sqrt();
        for (e, x) in ev.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((e - x).abs() < 1e-12);
        }
    }
}
