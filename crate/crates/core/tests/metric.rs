use kobalab::bumping::{verify_peak, BumpingAssembly, BumpingParams, VerifyOptions};
use kobalab::domains::ModelDomain;
use kobalab::field::{norm, Point};
use kobalab::metric::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn affine() -> UpperOptions {
    UpperOptions { degree: 1, ..Default::default() }
}

/// Parameters at which the ball passes the peak checks.
fn ball_model() -> PeakModel {
    let d = ModelDomain::ball(2).unwrap();
    let params = BumpingParams { epsilon: 1.0 / (96.0 * 64.0), ..Default::default() };
    let a = BumpingAssembly::new(d.clone(), params).unwrap();
    let rep = verify_peak(&a, &d.base_point(), &VerifyOptions { budget: 300, ..Default::default() }).unwrap();
    assert!(rep.pass, "{:?}", rep.first_failure());
    PeakModel::from_reports(a, &[rep]).unwrap()
}

fn random_ball_point(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> Point {
    loop {
        let p: Point = (0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let r = norm(&p);
        if r > 0.0 && r < 1.0 {
            let t = max_norm * rng.gen::<f64>().sqrt();
            return p.iter().map(|v| v * (t / r)).collect();
        }
    }
}

#[test]
fn upper_bounds_near_exact_values() {
    let d1 = ModelDomain::disc();
    let u = kobayashi_upper(&d1, &[c(0.5, 0.0)], &[c(1.0, 0.0)], &affine()).unwrap();
    assert!(u.value <= 4.0 / 3.0 * 1.01 && u.value >= 4.0 / 3.0);
    let d2 = ModelDomain::ball(2).unwrap();
    let z = [c(0.5, 0.0), c(0.0, 0.0)];
    let u = kobayashi_upper(&d2, &z, &[c(0.0, 0.0), c(1.0, 0.0)], &affine()).unwrap();
    let exact = 1.0 / 0.75f64.sqrt();
    assert!(u.value <= exact * 1.01 && u.value >= exact * (1.0 - 1e-9));
}

#[test]
fn schwarz_pick_equality_on_the_disc() {
    let d1 = ModelDomain::disc();
    for k in 0..12 {
        let z = Complex64::from_polar(0.99 * k as f64 / 11.0, 0.7 * k as f64);
        let u = kobayashi_upper(&d1, &[z], &[c(1.0, 0.0)], &affine()).unwrap();
        let e = exact_metric(&d1, &[z], &[c(1.0, 0.0)]).unwrap();
        assert!(u.value / e >= 1.0 - 1e-9 && u.value / e <= 1.01, "{z} {}", u.value / e);
    }
}

#[test]
fn sandwich_on_random_ball_points() {
    let d2 = ModelDomain::ball(2).unwrap();
    let model = ball_model();
    let c_hat = model.rate_constant(&default_rate_grid()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let z = random_ball_point(&mut rng, 2, 0.99);
        let x = random_ball_point(&mut rng, 2, 1.0);
        let e = estimate_metric(&d2, &z, &x, &affine(), Some((&model, c_hat))).unwrap();
        let exact = e.exact.unwrap();
        assert!(exact <= e.upper * (1.0 + 1e-9) && e.upper <= exact * 1.01, "{e:?}");
        if let Some(lp) = e.lower_peak {
            assert!(lp <= exact * (1.0 + 1e-9), "{e:?}");
        }
        assert!(e.lower_rate.unwrap() <= exact * (1.0 + 1e-9), "{e:?}");
    }
}

#[test]
fn higher_degree_never_worsens_the_bound() {
    let d2 = ModelDomain::ball(2).unwrap();
    let d3 = ModelDomain::finite_graph(2).unwrap();
    let cases = [
        (&d2, vec![c(0.6, 0.0), c(0.3, 0.0)], vec![c(0.2, 0.1), c(1.0, 0.0)]),
        (&d3, vec![c(0.05, 0.0), c(0.0, -0.05)], vec![c(1.0, 0.0), c(0.1, 0.0)]),
    ];
    for (d, z, x) in cases {
        let mut last = f64::INFINITY;
        for degree in 1..=3 {
            let u = kobayashi_upper(d, &z, &x, &UpperOptions { degree, budget: 60, samples: 64 }).unwrap();
            assert!(u.value <= last, "{} degree {degree}: {} > {last}", d.name(), u.value);
            last = u.value;
        }
    }
}

#[test]
fn peak_bound_matches_closed_form_inverse() {
    // f = √t gives G(δ) = γ²δ²/4, so with η = 1/2 the bound is γ / (2 c δ^{1/2})
    let model = ball_model();
    let gamma = model.assembly().params().gamma;
    let c3 = model.approach_constant();
    for delta in [1e-4, 1e-3, 1e-2] {
        let b = model.peak_bound(delta, 1.0).unwrap();
        let oracle = gamma / (2.0 * c3 * delta.sqrt());
        assert!((b.value / oracle - 1.0).abs() < 1e-6, "{delta}: {} vs {oracle}", b.value);
        assert!(!b.convex_repaired);
    }
}

#[test]
fn estimates_increase_towards_the_boundary() {
    let d2 = ModelDomain::ball(2).unwrap();
    let model = ball_model();
    let c_hat = model.rate_constant(&default_rate_grid()).unwrap();
    let mut prev = (0.0, 0.0, 0.0);
    for k in 3..=14 {
        let delta = 2f64.powi(-k);
        let z = [c(1.0 - delta, 0.0), c(0.0, 0.0)];
        let x = [c(0.0, 0.0), c(1.0, 0.0)];
        let e = estimate_metric(&d2, &z, &x, &affine(), Some((&model, c_hat))).unwrap();
        let now = (e.exact.unwrap(), e.lower_peak.unwrap(), e.lower_rate.unwrap());
        assert!(now.0 >= prev.0 && now.1 >= prev.1 && now.2 >= prev.2);
        prev = now;
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn rate_bound_slopes() {
    let deltas: Vec<f64> = (0..=8).map(|i| 10f64.powf(-4.0 + 0.25 * i as f64)).collect();
    let d2 = ModelDomain::ball(2).unwrap();
    let ys: Vec<f64> = deltas
        .iter()
        .map(|&dl| lower_bound_rate(&d2, 1.0, &[c(1.0 - dl, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap().value.ln())
        .collect();
    let xs: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln()).collect();
    assert!((slope(&xs, &ys) - 0.5).abs() < 0.02);

    let d5 = ModelDomain::infinite_graph(0.5).unwrap();
    let ys: Vec<f64> = deltas
        .iter()
        .map(|&dl| lower_bound_rate(&d5, 1.0, &[c(0.0, 0.0), c(0.0, -dl)], &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap().value.ln())
        .collect();
    let xs: Vec<f64> = deltas.iter().map(|d| (1.0 / d).ln().ln()).collect();
    assert!((slope(&xs, &ys) - 1.0).abs() < 0.1, "{}", slope(&xs, &ys));
}

#[test]
fn peak_function_mean_value_along_random_discs() {
    let d2 = ModelDomain::ball(2).unwrap();
    let model = ball_model();
    let w = d2.base_point();
    let a = model.assembly();
    let psi = a.psi_field(&w);
    let f1 = |s: f64| model.f1(s);
    let z = [c(0.9, 0.0), c(0.0, 0.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let x: Point = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let q: Point = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let mut disc = AnalyticDisc::new(vec![z.to_vec(), x, q], 1.0);
        while !disc_feasible(&d2, &disc, 64).feasible {
            disc.scale *= 0.8;
        }
        let rep = mean_value_check(&psi, &disc, 128, Some((&f1, &w)), 1e-9).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.sub_mean_gap >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimators_are_homogeneous(
        zr in -0.6f64..0.6, zi in -0.6f64..0.6, wr in -0.5f64..0.5,
        xr in -1.0f64..1.0, xi in -1.0f64..1.0, yr in -1.0f64..1.0,
        scale in prop_oneof![-8.0f64..-0.1, 0.1f64..8.0],
    ) {
        let d2 = ModelDomain::ball(2).unwrap();
        let z = [c(zr, zi), c(wr, 0.0)];
        let x = [c(xr, xi), c(yr, 0.3)];
        let cx: Vec<Complex64> = x.iter().map(|v| v * scale).collect();
        let u1 = kobayashi_upper(&d2, &z, &x, &affine()).unwrap().value;
        let u2 = kobayashi_upper(&d2, &z, &cx, &affine()).unwrap().value;
        prop_assert!((u2 - scale.abs() * u1).abs() <= 1e-12 * u2);
        let e1 = exact_metric(&d2, &z, &x).unwrap();
        let e2 = exact_metric(&d2, &z, &cx).unwrap();
        prop_assert!((e2 - scale.abs() * e1).abs() <= 1e-12 * e2);
        let r1 = lower_bound_rate(&d2, 0.7, &z, &x).unwrap().value;
        let r2 = lower_bound_rate(&d2, 0.7, &z, &cx).unwrap().value;
        prop_assert!((r2 - scale.abs() * r1).abs() <= 1e-12 * r2);
    }
}
