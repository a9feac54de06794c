use proptest::prelude::*;
use stochvort::biot_savart::*;
use stochvort::spectral::{dealias, lp_norm, to_grid, SpectralField, WaveVector};

fn field(cutoff: usize, seed: u64) -> SpectralField {
    SpectralField::random(cutoff, cutoff, 1.0, 1.0, seed)
}

#[test]
fn curl_of_velocity_recovers_vorticity() {
    for seed in 0..20 {
        let xi = field(21, seed);
        let v = velocity(&xi);
        let back = v.curl();
        let scale = xi.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(back.max_abs_diff(&xi) <= 1e-12 * scale);
        assert!(v.divergence_defect() <= 1e-15 * scale);
    }
}

#[test]
fn single_mode_norm_equivalence() {
    for (k1, k2) in [(1, 0), (2, 3), (-4, 1), (0, 5)] {
        let k = WaveVector::new(k1, k2);
        let xi = SpectralField::from_modes(6, &[(k, num_complex::Complex64::new(0.3, 0.8))]);
        let v = velocity(&xi);
        let h1 = v.u1.map_symbol(|k| k.norm()).energy() + v.u2.map_symbol(|k| k.norm()).energy();
        assert!((h1 / xi.energy() - 1.0).abs() < 1e-14);
    }
}

#[test]
fn advection_is_neutral() {
    for seed in 0..100 {
        let xi = dealias(&field(21, 1000 + seed));
        let div = flux(&xi).unwrap().divergence();
        let pairing = div.inner(&xi);
        let scale = (div.energy() * xi.energy()).sqrt();
        assert!(pairing.abs() <= 1e-10 * scale, "seed {seed}: {pairing} vs {scale}");
    }
}

fn max_sup_ratio(cutoff: usize, fields: u64) -> f64 {
    let n = 2 * cutoff + 2;
    (0..fields)
        .map(|s| {
            let xi = SpectralField::random(cutoff, cutoff, 2.0, 1.0, s);
            let v = magnitude_grid(&velocity(&xi), n).unwrap().max_abs();
            v / lp_norm(&to_grid(&xi, n).unwrap(), 6.0).unwrap()
        })
        .fold(0.0, f64::max)
}

#[test]
fn sup_velocity_constant_is_resolution_stable() {
    let coarse = max_sup_ratio(10, 1000);
    let fine = max_sup_ratio(20, 1000);
    assert!((fine / coarse - 1.0).abs() < 0.1, "coarse {coarse}, fine {fine}");
}

#[test]
fn flux_bound_constant_is_resolution_stable() {
    let ratio = |cutoff: usize| -> f64 {
        let n = 2 * cutoff + 2;
        (0..200)
            .map(|s| {
                let xi = SpectralField::random(cutoff, cutoff, 2.0, 1.0, s);
                let q = vector_lp_norm(&flux(&xi).unwrap(), n, 6.0).unwrap();
                q / lp_norm(&to_grid(&xi, n).unwrap(), 6.0).unwrap().powi(2)
            })
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (ratio(10), ratio(20));
    assert!((fine / coarse - 1.0).abs() < 0.2, "coarse {coarse}, fine {fine}");
}

#[test]
fn truncated_flux_regimes() {
    let spec = TruncationSpec::new(3.0, 6.0).unwrap();
    let n = 22;
    let unit = field(10, 5);
    let norm = lp_norm(&to_grid(&unit, n).unwrap(), 6.0).unwrap();
    let small = &unit * (1.5 / norm);
    let t = truncated_flux(&small, &spec, n).unwrap();
    assert_eq!(t.theta, 1.0);
    assert_eq!(t.truncated(), flux(&small).unwrap());
    assert_eq!(q_tilde(&small, &spec, n).unwrap().u1.energy(), 0.0);

    let big = &unit * (4.5 / norm);
    assert_eq!(q_truncated(&big, &spec, n).unwrap().u1.energy(), 0.0);
    assert_eq!(q_tilde(&big, &spec, n).unwrap().u2.energy(), 0.0);
}

#[test]
fn truncated_flux_is_globally_bounded() {
    let spec = TruncationSpec::new(4.0, 6.0).unwrap();
    let n = 22;
    let unit = field(10, 9);
    let norm = lp_norm(&to_grid(&unit, n).unwrap(), 6.0).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=40 {
        let xi = &unit * (i as f64 * 0.25 / norm);
        let q = vector_lp_norm(&q_truncated(&xi, &spec, n).unwrap(), n, 6.0).unwrap();
        worst = worst.max(q / (spec.level() + 1.0).powi(2));
    }
    let c = vector_lp_norm(&flux(&unit).unwrap(), n, 6.0).unwrap() / norm.powi(2);
    assert!(worst <= c * (1.0 + 1e-12), "{worst} > {c}");
}

#[test]
fn lipschitz_probe_is_finite_and_scales() {
    let spec = TruncationSpec::new(5.0, 6.0).unwrap();
    let coarse = lipschitz_probe(&spec, 10, 22, 1000, 1).unwrap();
    let fine = lipschitz_probe(&spec, 21, 64, 1000, 1).unwrap();
    assert!(coarse.max_ratio.is_finite() && fine.max_ratio.is_finite());
    assert!(fine.scaled_constant < 2.0 * coarse.scaled_constant);
    assert!(coarse.scaled_constant < 2.0 * fine.scaled_constant);
    assert_eq!(coarse.skipped, 0);
}

#[test]
fn lipschitz_probe_rejects_zero_trials() {
    let spec = TruncationSpec::new(5.0, 6.0).unwrap();
    assert!(lipschitz_probe(&spec, 4, 10, 0, 1).is_err());
}

#[test]
fn identical_and_saturated_pairs() {
    let spec = TruncationSpec::new(2.0, 6.0).unwrap();
    let n = 18;
    let xi = field(8, 3);
    let d = &q_truncated(&xi, &spec, n).unwrap().u1 - &q_truncated(&xi, &spec, n).unwrap().u1;
    assert_eq!(d.energy(), 0.0);
    let norm = lp_norm(&to_grid(&xi, n).unwrap(), 6.0).unwrap();
    let a = &xi * (3.5 / norm);
    let b = &field(8, 4) * (10.0 / norm);
    assert_eq!(q_truncated(&a, &spec, n).unwrap(), q_truncated(&b, &spec, n).unwrap());
}

proptest! {
    #[test]
    fn theta_is_bounded_and_monotone(level in 1.0f64..20.0, s in 0.0f64..30.0, ds in 0.0f64..1.0) {
        let spec = TruncationSpec::new(level, 6.0).unwrap();
        let a = spec.theta(s).unwrap();
        let b = spec.theta(s + ds).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
        prop_assert!(spec.theta_prime(s).unwrap().abs() <= 1.5);
    }

    #[test]
    fn velocity_is_divergence_free(seed in any::<u64>(), cutoff in 1usize..12, k1 in -50i64..50, k2 in -50i64..50) {
        prop_assert_eq!(velocity_symbol_divergence(WaveVector::new(k1, k2)), 0);
        let xi = field(cutoff, seed);
        let scale = xi.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        prop_assert!(velocity(&xi).divergence_defect() <= 1e-15 * scale);
    }

    #[test]
    fn velocity_is_hermitian(seed in any::<u64>()) {
        let v = velocity(&field(6, seed));
        prop_assert_eq!(v.u1.hermitian_defect(), 0.0);
        prop_assert_eq!(v.u2.hermitian_defect(), 0.0);
    }
}
