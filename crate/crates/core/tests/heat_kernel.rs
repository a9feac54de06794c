use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochvort::heat_kernel::*;
use stochvort::spectral::{to_grid, SpectralField, VectorSpectralField, WaveVector};

fn random_point(rng: &mut ChaCha8Rng) -> Point {
    [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)]
}

#[test]
fn fourier_and_images_agree_at_quarter_time() {
    let spec = KernelEvalSpec::new(0.25, 3, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (x, y) = (random_point(&mut rng), random_point(&mut rng));
        let d = (eval_fourier(&spec, x, y) - eval_images(&spec, x, y)).abs();
        assert!(d < 1e-10, "diff {d}");
    }
}

#[test]
fn combined_evaluator_switches_representation() {
    let (x, y) = ([0.2, 0.3], [1.0, 2.0]);
    let small = KernelEvalSpec::for_time(0.1).unwrap();
    let large = KernelEvalSpec::for_time(2.0).unwrap();
    assert_eq!(eval(&small, x, y), eval_images(&small, x, y));
    assert_eq!(eval(&large, x, y), eval_fourier(&large, x, y));
}

#[test]
fn gradient_integrates_to_zero() {
    let spec = KernelEvalSpec::for_time(0.2).unwrap();
    let n = 64;
    let h = TAU / n as f64;
    let x = [1.1, 4.0];
    let mut acc = [0.0, 0.0];
    for a in 0..n {
        for b in 0..n {
            let g = eval_grad(&spec, x, [a as f64 * h, b as f64 * h]);
            acc[0] += g[0] * h * h;
            acc[1] += g[1] * h * h;
        }
    }
    assert!(acc[0].abs() < 1e-10 && acc[1].abs() < 1e-10, "{acc:?}");
}

#[test]
fn semigroup_matches_kernel_convolution() {
    let f = SpectralField::random(6, 6, 1.0, 1.0, 17);
    let t = 0.1;
    let spec = KernelEvalSpec::for_time(t).unwrap();
    let n = 32;
    let grid = to_grid(&f, n).unwrap();
    let s = semigroup_apply(t, &f).unwrap();
    let h = grid.spacing();
    for x in [[0.3, 0.4], [PI, 1.0], [5.0, 6.0]] {
        let mut conv = 0.0;
        for a in 0..n {
            for b in 0..n {
                conv += eval_fourier(&spec, x, [a as f64 * h, b as f64 * h]) * grid.at(a, b) * h * h;
            }
        }
        assert!((conv - s.eval_at(x)).abs() < 1e-8, "{conv} vs {}", s.eval_at(x));
    }
}

#[test]
fn semigroup_law() {
    let f = SpectralField::random(8, 8, 0.5, 1.0, 3);
    let a = semigroup_apply(0.3, &semigroup_apply(0.2, &f).unwrap()).unwrap();
    let b = semigroup_apply(0.5, &f).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-15);
}

#[test]
fn j_of_zero_is_zero() {
    let zero = VectorSpectralField {
        u1: SpectralField::zeros(4),
        u2: SpectralField::zeros(4),
    };
    let j = apply_j(&vec![zero; 10], 1.0).unwrap();
    assert_eq!(j.energy(), 0.0);
}

#[test]
fn j_of_constant_single_mode_has_closed_form() {
    let k = WaveVector::new(2, 1);
    let c = Complex64::new(0.7, -0.2);
    let phi = VectorSpectralField {
        u1: SpectralField::from_modes(3, &[(k, c)]),
        u2: SpectralField::zeros(3),
    };
    let t = 0.8;
    for steps in [1, 7, 40] {
        let j = apply_j(&vec![phi.clone(); steps], t).unwrap();
        let lambda = k.norm_sq() as f64;
        let expected = Complex64::new(0.0, -(k.k1 as f64)) * c * (1.0 - (-lambda * t).exp()) / lambda;
        assert!((j.get(k) - expected).norm() < 1e-14, "steps={steps}");
    }
}

#[test]
fn smoothing_constant_is_resolution_stable() {
    let t = 0.5;
    let steps = 20;
    let ratio_at = |cutoff: usize, n: usize| -> f64 {
        (0..8u64)
            .map(|trial| {
                let phi: Vec<_> = (0..steps as u64)
                    .map(|m| VectorSpectralField {
                        u1: SpectralField::random(cutoff, cutoff, 1.0, 1.0, 1000 * trial + 2 * m),
                        u2: SpectralField::random(cutoff, cutoff, 1.0, 1.0, 1000 * trial + 2 * m + 1),
                    })
                    .collect();
                smoothing_ratio(&phi, t, n, 4.0).unwrap()
            })
            .fold(0.0, f64::max)
    };
    let coarse = ratio_at(8, 18);
    let fine = ratio_at(16, 34);
    assert!(coarse.is_finite() && fine.is_finite());
    assert!(fine / coarse < 1.5 && coarse / fine < 1.5, "coarse {coarse}, fine {fine}");
}

#[test]
fn integral_is_position_independent() {
    for gradient in [false, true] {
        let a = kernel_lp_integral_at(1.0, 0.01, gradient, [PI, PI]).unwrap();
        let b = kernel_lp_integral_at(1.0, 0.01, gradient, [0.1, 5.7]).unwrap();
        assert!((a - b).abs() < 1e-8, "gradient={gradient}: {a} vs {b}");
    }
}

#[test]
fn estimate_slopes() {
    let xs = [[0.5, 1.5]];
    for (beta, gradient) in [(1.0, true), (1.2, true), (1.0, false), (1.5, false)] {
        let fit = kernel_estimate_sweep(beta, gradient, 1e-3, 1e-1, 7, &xs, 0.05).unwrap();
        assert!(
            (fit.fitted_slope - fit.target_slope).abs() <= 0.05,
            "beta={beta} gradient={gradient}: slope {} target {}",
            fit.fitted_slope,
            fit.target_slope
        );
        assert!(fit.x_spread < 1e-8, "x spread {}", fit.x_spread);
        assert!(fit.rows.iter().all(|r| r.pass));
    }
}

proptest! {
    #[test]
    fn kernel_is_symmetric(t in 0.01f64..1.0, x1 in 0.0..TAU, x2 in 0.0..TAU, y1 in 0.0..TAU, y2 in 0.0..TAU) {
        let spec = KernelEvalSpec::for_time(t).unwrap();
        let (x, y) = ([x1, x2], [y1, y2]);
        prop_assert!((eval_images(&spec, x, y) - eval_images(&spec, y, x)).abs() < 1e-12 * eval_images(&spec, x, y).max(1.0));
        prop_assert!((eval_fourier(&spec, x, y) - eval_fourier(&spec, y, x)).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_translation_invariant(t in 0.01f64..1.0, x1 in 0.0..TAU, x2 in 0.0..TAU, y1 in 0.0..TAU, y2 in 0.0..TAU) {
        let spec = KernelEvalSpec::for_time(t).unwrap();
        let g = eval_images(&spec, [x1, x2], [y1, y2]);
        let g0 = eval_images(&spec, [0.0, 0.0], [x1 - y1, x2 - y2]);
        prop_assert!((g - g0).abs() < 1e-10 * g.max(1.0));
    }

    #[test]
    fn gradient_is_antisymmetric_in_arguments(t in 0.05f64..1.0, x1 in 0.0..TAU, x2 in 0.0..TAU, y1 in 0.0..TAU, y2 in 0.0..TAU) {
        let spec = KernelEvalSpec::for_time(t).unwrap();
        let gy = eval_grad(&spec, [x1, x2], [y1, y2]);
        let gx = eval_grad(&spec, [y1, y2], [x1, x2]);
        prop_assert!((gy[0] + gx[0]).abs() < 1e-9 && (gy[1] + gx[1]).abs() < 1e-9);
    }

    #[test]
    fn representations_agree(t in 0.01f64..1.0, x1 in 0.0..TAU, x2 in 0.0..TAU, y1 in 0.0..TAU, y2 in 0.0..TAU) {
        let spec = KernelEvalSpec::for_time(t).unwrap();
        let (x, y) = ([x1, x2], [y1, y2]);
        prop_assert!((eval_fourier(&spec, x, y) - eval_images(&spec, x, y)).abs() < 1e-10);
    }
}
