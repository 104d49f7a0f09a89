use kobalab::holomaps::*;
use kobalab::rates::RateFunction;
use num_complex::Complex64;

fn sqrt_rate(eta: f64) -> HolderRateSpec {
    predicted_rate(&RateFunction::power(0.5).unwrap(), eta).unwrap()
}

/// `max |b'|` over a polar grid of the closed disc; by the maximum principle
/// it is attained on the circle.
fn blaschke_lipschitz(a: f64) -> f64 {
    let mut m = 0.0f64;
    for k in 0..20_000 {
        let z = Complex64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 20_000.0);
        let d = (2.0 * z - a) / (1.0 - a * z) + a * z * (z - a) / ((1.0 - a * z) * (1.0 - a * z));
        m = m.max(d.norm());
    }
    m
}

#[test]
fn identity_is_far_inside_the_predicted_modulus() {
    let rep = measure_modulus(HoloMap::Identity { n: 2 }, &sqrt_rate(1.0), 400, 0).unwrap();
    assert!(rep.predicted_constant.is_finite() && rep.predicted_constant > 0.0);
    assert!((rep.holder_exponent - 1.0).abs() < 1e-9);
    assert!(rep.holder_constant <= 1.0 + 1e-12);
    assert!(rep.holder_sharper);
    assert!(rep.pairs.iter().all(|p| p.gap > 0.0));
    assert!(rep.pairs.iter().map(|p| p.gap).fold(1.0, f64::min) < 2e-5);
}

#[test]
fn blaschke_product_is_lipschitz_up_to_the_circle() {
    let a = 0.5;
    let rep = measure_modulus(HoloMap::parse("blaschke:0.5").unwrap(), &sqrt_rate(1.0), 600, 1).unwrap();
    let lip = blaschke_lipschitz(a);
    assert!(rep.holder_exponent > 0.95, "{}", rep.holder_exponent);
    let ratio = rep.pairs.iter().map(|p| p.image_gap / p.gap).fold(0.0, f64::max);
    assert!(ratio <= lip * (1.0 + 1e-6), "{ratio} {lip}");
    assert!(rep.predicted_constant.is_finite() && rep.holder_sharper);
}

#[test]
fn square_map_constant_matches_its_lipschitz_bound() {
    let rep = measure_modulus(HoloMap::Square, &sqrt_rate(0.5), 400, 2).unwrap();
    let ratio = rep.pairs.iter().map(|p| p.image_gap / p.gap).fold(0.0, f64::max);
    assert!(ratio <= 2.0 + 1e-12 && ratio > 1.0);
    assert!(rep.holder_sharper);
}

#[test]
fn fitted_constant_is_a_supremum_over_pairs() {
    let rate = sqrt_rate(1.0);
    let map = HoloMap::parse("blaschke:0.5").unwrap();
    let near = measure_modulus(map, &rate, 300, 3).unwrap();
    let far = measure_modulus(map, &rate, 300, 4).unwrap();
    let mut merged = near.pairs.clone();
    merged.extend(far.pairs.iter().cloned());
    let both = fit_modulus(map, &rate, merged.clone());
    assert_eq!(both.predicted_constant, near.predicted_constant.max(far.predicted_constant));
    merged.reverse();
    assert_eq!(fit_modulus(map, &rate, merged).predicted_constant, both.predicted_constant);
}
