use stochvort::biot_savart::TruncationSpec;
use stochvort::heat_kernel::semigroup_apply;
use stochvort::noise::{convolution_path, NoisePath, NoiseSpec};
use stochvort::solver::*;
use stochvort::spectral::SpectralField;

fn setup(cutoff: usize, grid: usize, dt: f64, steps: usize, level: f64, ic: InitialCondition, amp: f64, seed: u64) -> Simulation {
    let noise = NoiseSpec::new(1.0, cutoff, dt, steps, seed).unwrap().with_amplitude(amp).unwrap();
    Simulation::new(cutoff, grid, TruncationSpec::new(level, 6.0).unwrap(), noise, &ic, true).unwrap()
}

fn random_ic(amplitude: f64) -> InitialCondition {
    InitialCondition::Random { amplitude, band: 6, seed: 11 }
}

#[test]
fn linear_run_is_heat_flow_plus_convolution() {
    let sim = setup(10, 22, 0.01, 30, 1e6, random_ic(1.0), 1.0, 4).with_nonlinear(false);
    let path = NoisePath::generate(sim.noise());
    let traj = run_with_noise(&sim, &path).unwrap();
    let z = convolution_path(sim.noise(), &path).unwrap();
    for (m, state) in traj.states.iter().enumerate() {
        let exact = &semigroup_apply(m as f64 * sim.dt(), sim.initial()).unwrap() + &z[m];
        assert!(state.max_abs_diff(&exact) < 1e-13, "step {m}");
        assert_eq!(&traj.z_states[m], &z[m]);
    }
}

#[test]
fn truncated_path_reproduces_prefix() {
    let sim = setup(8, 18, 0.01, 20, 1e6, random_ic(1.0), 1.0, 5);
    let path = NoisePath::generate(sim.noise());
    let full = run_with_noise(&sim, &path).unwrap();
    let part = run_with_noise(&sim, &path.truncated(7)).unwrap();
    assert_eq!(part.states.len(), 8);
    for (a, b) in part.states.iter().zip(&full.states) {
        assert_eq!(a, b);
    }
}

#[test]
fn runs_are_deterministic() {
    let sim = setup(8, 18, 0.01, 20, 1e6, random_ic(1.0), 1.0, 6);
    let a = run(&sim).unwrap();
    let b = run(&sim).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.lp_norms, b.lp_norms);
}

#[test]
fn larger_truncation_agrees_until_first_hit() {
    let sim = setup(8, 18, 0.01, 60, 2.0, random_ic(1.0), 6.0, 7);
    let small = run(&sim).unwrap();
    let (hit, _) = small.sigma_hit.expect("norm should reach the level");
    assert!(small.lp_norms[..hit].iter().all(|&v| v < 2.0));
    let big = run(&sim.with_truncation(TruncationSpec::new(5.0, 6.0).unwrap())).unwrap();
    for m in 0..=hit {
        assert_eq!(small.states[m], big.states[m], "step {m}");
    }
}

#[test]
fn saturated_step_is_linear() {
    let sim = setup(8, 18, 0.01, 1, 1.0, random_ic(5.0), 0.0, 1);
    let xi = sim.initial().clone();
    assert!(sim.lp_norm(&xi).unwrap() >= 2.0);
    let eta = SpectralField::zeros(8);
    let (a, _) = step(&sim, &xi, &eta, 0.0).unwrap();
    let (b, _) = step(&sim.with_nonlinear(false), &xi, &eta, 0.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn physical_run_never_hits_the_level() {
    let sim = setup(10, 22, 0.01, 100, 1e6, InitialCondition::SinX1Cos2X2 { amplitude: 1.0 }, 1.0, 8);
    let traj = run(&sim).unwrap();
    assert_eq!(traj.sigma_hit, None);
    let report = apriori_monitor(&traj, &sim, 1.0).unwrap();
    assert!(report.bound.is_finite() && report.sup_beta_p.is_finite());
}

#[test]
fn noiseless_lp_norm_does_not_grow() {
    let sim = setup(10, 22, 0.005, 100, 1e6, random_ic(2.0), 0.0, 9);
    let traj = run(&sim).unwrap();
    let inputs = AprioriInputs::from_trajectory(&traj, &sim).unwrap();
    assert_eq!(inputs.sup_z, 0.0);
    assert!(inputs.sup_beta_p <= inputs.initial_p * (1.0 + 1e-12), "{inputs:?}");
    assert_eq!(inputs.required_cp(), 0.0);
}

#[test]
fn pure_noise_is_bounded_by_forcing_terms() {
    let sim = setup(8, 18, 0.01, 50, 1e6, InitialCondition::Zero, 1.0, 10);
    let ensemble = apriori_ensemble(&sim, 20, 3).unwrap();
    let cp = ensemble.iter().map(|e| e.required_cp()).fold(0.0, f64::max);
    assert!(cp.is_finite());
    for e in &ensemble {
        assert_eq!(e.initial_p, 0.0);
        assert!(!e.report(cp).violated);
    }
}

#[test]
fn picard_without_flux_is_affine() {
    let sim = setup(8, 18, 0.01, 10, 1e6, random_ic(1.0), 1.0, 12).with_nonlinear(false);
    let path = NoisePath::generate(sim.noise());
    let r = picard_solve(&sim, &path, 1e-12, 5).unwrap();
    assert_eq!(r.iterations, 1);
    assert_eq!(r.history, vec![0.0]);
    let traj = run_with_noise(&sim, &path).unwrap();
    for (a, b) in r.states.iter().zip(&traj.states) {
        assert!(a.max_abs_diff(b) < 1e-13);
    }
}

#[test]
fn picard_contracts_geometrically() {
    let sim = setup(21, 64, 0.001, 50, 5.0, random_ic(1.0), 1.0, 5);
    let path = NoisePath::generate(sim.noise());
    let r = picard_solve(&sim, &path, 1e-12, 60).unwrap();
    let ratios = r.ratios();
    assert!(ratios.len() >= 3);
    assert!(ratios.iter().all(|&q| q < 1.0));
    let mut log_sum = 0.0;
    for (i, q) in ratios.iter().enumerate() {
        log_sum += q.ln();
        let geo = (log_sum / (i + 1) as f64).exp();
        if i >= 1 {
            assert!((q - geo).abs() <= 0.1, "ratio {q} vs running mean {geo}");
        }
    }
    let traj = run_with_noise(&sim, &path).unwrap();
    let gap = r.states.iter().zip(&traj.states).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    assert!(gap < 1e-12, "picard vs run {gap}");
}

#[test]
fn picard_reports_non_contraction() {
    let sim = setup(8, 18, 0.01, 20, 1e6, random_ic(3.0), 1.0, 13);
    let path = NoisePath::generate(sim.noise());
    assert!(matches!(
        picard_solve(&sim, &path, 1e-14, 2),
        Err(stochvort::Error::NonContraction { iterations: 2, .. })
    ));
}

#[test]
fn first_order_under_refinement() {
    let sim = setup(10, 22, 0.0025, 160, 1e6, random_ic(3.0), 1.0, 14);
    let changes = refinement_changes(&sim, 3).unwrap();
    let order = (changes[0] / changes[1]).log2();
    assert!(order >= 0.9, "observed order {order} from {changes:?}");
}
