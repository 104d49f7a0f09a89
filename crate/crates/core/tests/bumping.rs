use kobalab::bumping::{calibrate, verify_bumping, verify_peak, BumpingAssembly, BumpingParams, CalibrationOptions, VerifyOptions};
use kobalab::domains::ModelDomain;
use kobalab::Error;

fn quick() -> CalibrationOptions {
    CalibrationOptions { verify: VerifyOptions { budget: 200, ..Default::default() }, w_samples: 2, ..Default::default() }
}

#[test]
fn ball_calibrates_with_peak() {
    let d = ModelDomain::ball(2).unwrap();
    let rep = calibrate(&d, &quick()).unwrap();
    assert!(rep.bumping.iter().all(|r| r.pass));
    assert!(rep.peak.iter().all(|r| r.pass));
    assert!(rep.params.epsilon <= 1.0 / 96.0);
    // the same parameters hold up at a fresh seed
    let a = BumpingAssembly::new(d.clone(), rep.params).unwrap();
    let opts = VerifyOptions { budget: 300, seed: 11, radius: Some(rep.radius), ..Default::default() };
    let rep2 = verify_peak(&a, &d.base_point(), &opts).unwrap();
    assert!(rep2.pass, "{:?} {:?}", rep.params, rep2.first_failure());
}

#[test]
fn finite_type_bumping_calibrates() {
    let d = ModelDomain::finite_graph(2).unwrap();
    let opts = CalibrationOptions { require_peak: false, ..quick() };
    let rep = calibrate(&d, &opts).unwrap();
    assert!(rep.bumping.iter().all(|r| r.pass));
    let sandwich = rep.bumping[0].check("strip_sandwich").unwrap();
    assert!(sandwich.samples > 10);
}

#[test]
fn large_epsilon_fails_with_witness() {
    let d = ModelDomain::ball(2).unwrap();
    let a = BumpingAssembly::new(d.clone(), BumpingParams { epsilon: 0.5, ..Default::default() }).unwrap();
    let rep = verify_bumping(&a, &d.base_point(), &VerifyOptions { budget: 200, ..Default::default() }).unwrap();
    let fail = rep.first_failure().expect("negative control must fail");
    assert_eq!(fail.name, "level_set_pseudoconvex");
    assert!(fail.witness.is_some());
    assert!(matches!(rep.into_result(), Err(Error::Calibration { .. })));
}

#[test]
fn reversed_family_is_rejected() {
    let d = ModelDomain::ball(2).unwrap().with_reversed_family();
    match calibrate(&d, &quick()) {
        Err(Error::Calibration { property, .. }) => assert_eq!(property, "f_property"),
        other => panic!("expected calibration failure, got {other:?}"),
    }
}

#[test]
fn rho_vanishes_on_boundary_samples() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for name in ["D2", "D3", "D4"] {
        let d = ModelDomain::parse(name).unwrap();
        let a = BumpingAssembly::new(d.clone(), BumpingParams::default()).unwrap();
        for w in d.sample_boundary(&mut rng, 20) {
            assert!(a.rho(&w, &w).unwrap().abs() <= 1e-12);
        }
    }
}

#[test]
fn local_sum_equals_full_sum() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let d = ModelDomain::ball(2).unwrap();
    let a = BumpingAssembly::new(d, BumpingParams { j_max: 60, ..Default::default() }).unwrap();
    for _ in 0..200 {
        let rad = 1.0 + 10f64.powf(-rng.gen_range(0.5..12.0));
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = [num_complex::Complex64::from_polar(rad * th.cos(), 0.3), num_complex::Complex64::new(rad * th.sin(), 0.0)];
        assert_eq!(a.phi_global(&z).unwrap().value, a.phi_global_full(&z).unwrap());
    }
}
