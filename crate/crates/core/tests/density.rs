use stochvort::biot_savart::TruncationSpec;
use stochvort::density::*;
use stochvort::noise::{convolution_variance, NoiseSpec};
use stochvort::rng::ModeStream;
use stochvort::solver::{InitialCondition, Simulation};
use stochvort::stats::{ks_normal, ks_two_sample, variance, variance_stderr, KS_CRIT_001};

const X: [f64; 2] = [std::f64::consts::PI, std::f64::consts::PI];

fn sim(amplitude: f64, ic: InitialCondition, nonlinear: bool, dt: f64, steps: usize) -> Simulation {
    let noise = NoiseSpec::new(1.0, 8, dt, steps, 0).unwrap().with_amplitude(amplitude).unwrap();
    Simulation::new(8, 26, TruncationSpec::new(1e6, 6.0).unwrap(), noise, &ic, nonlinear).unwrap()
}

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut s = ModeStream::new(seed, 0, 1);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (a, b) = s.normal_pair();
        out.push(a);
        out.push(b);
    }
    out.truncate(n);
    out
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn zero_noise_ensemble_is_deterministic() {
    let s = sim(0.0, InitialCondition::SinX1 { amplitude: 1.0 }, true, 0.01, 10);
    let r = ensemble(&s, 10, X, 50, 1, "h").unwrap();
    assert!(r.values.iter().all(|&v| v == r.values[0]));
    assert_eq!(r.samples, 50);
    assert_eq!(r.config_hash, "h");
    assert!(ensemble(&s, 10, X, 1, 1, "h").is_err());
}

#[test]
fn linear_ensemble_matches_gaussian_law() {
    let s = sim(1.0, InitialCondition::Zero, false, 0.05, 20);
    let r = ensemble(&s, 20, X, 4000, 7, "lin").unwrap();
    let exact = convolution_variance(1.0, 8, 1.0, 1.0).unwrap();
    let var = variance(&r.values);
    assert!((var - exact).abs() < 3.0 * variance_stderr(exact, r.values.len()), "{var} vs {exact}");
    let (m, se) = mean_with_stderr(&r.values);
    assert!(m.abs() < 3.0 * se);
    let ks = ks_normal(&r.values, 0.0, exact.sqrt());
    assert!(ks < KS_CRIT_001 / (r.values.len() as f64).sqrt());
}

#[test]
fn nonlinear_mean_vanishes_from_zero_start() {
    let s = sim(1.0, InitialCondition::Zero, true, 0.02, 25);
    let r = ensemble(&s, 25, X, 1000, 8, "nl").unwrap();
    let (m, se) = mean_with_stderr(&r.values);
    assert!(m.abs() < 3.0 * se, "{m} {se}");
}

#[test]
fn kde_recovers_standard_normal() {
    let v = gaussian(10_000, 3);
    let DensityEstimate::Curve { xs, density, bandwidth } = kde(&v, None).unwrap() else {
        panic!("expected a curve");
    };
    assert_eq!(xs.len(), 512);
    assert!(bandwidth > 0.0);
    let sup = xs.iter().zip(&density).map(|(&x, &d)| (d - normal_pdf(x)).abs()).fold(0.0, f64::max);
    assert!(sup < 0.05, "{sup}");
    let dx = xs[1] - xs[0];
    assert!((trapezoid(&density, dx) - 1.0).abs() < 1e-6);
}

#[test]
fn kde_ignores_order_and_threads() {
    let v = gaussian(500, 4);
    let mut rev = v.clone();
    rev.reverse();
    let base = kde(&v, Some(0.3)).unwrap();
    assert_eq!(base, kde(&rev, Some(0.3)).unwrap());
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        assert_eq!(base, pool.install(|| kde(&v, Some(0.3)).unwrap()));
    }
    assert!(kde(&v, Some(-1.0)).is_err());
}

#[test]
fn gaussian_sample_passes_all_proxies() {
    let v = gaussian(10_000, 5);
    let r = continuity_diagnostics(&v).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.local_mass_table.len(), LOCAL_MASS_LEVELS);
    let mut shuffled = v.clone();
    shuffled.rotate_left(1234);
    shuffled.swap(0, 9000);
    assert_eq!(r, continuity_diagnostics(&shuffled).unwrap());
}

#[test]
fn independent_ensembles_agree_in_ks() {
    let s = sim(1.0, InitialCondition::Zero, true, 0.02, 10);
    let a = ensemble(&s, 10, X, 1000, 100, "a").unwrap().values;
    let b = ensemble(&s, 10, X, 1000, 200, "b").unwrap().values;
    let threshold = KS_CRIT_001 * (2.0 / 1000.0f64).sqrt();
    assert!(ks_two_sample(&a, &b) < threshold);
}

#[test]
fn ensemble_is_thread_count_independent() {
    let s = sim(1.0, InitialCondition::Zero, true, 0.02, 5);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| ensemble(&s, 5, X, 64, 9, "t").unwrap())
    };
    assert_eq!(run(1), run(4));
}
