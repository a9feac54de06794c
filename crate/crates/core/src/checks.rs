//! The acceptance suite: one function per criterion, tolerances pinned here.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::biot_savart::{flux, velocity, velocity_symbol_divergence, TruncationSpec};
use crate::cli::{dispatch, Subcommand};
use crate::config::RunConfig;
use crate::density::{continuity_diagnostics, ensemble};
use crate::error::Result;
use crate::heat_kernel::{eval_fourier, eval_images, kernel_estimate_sweep, KernelEvalSpec};
use crate::malliavin::{
    all_directions, finite_difference, lower_bound_a, malliavin_ensemble, propagate_tangents, window_moments, Direction,
};
use crate::noise::{convolution_check, convolution_variance, NoisePath, NoiseSpec};
use crate::solver::{apriori_ensemble, picard_solve, run, run_with_noise, InitialCondition, Simulation};
use crate::spectral::{dealias, half_lattice, SpectralField, WaveVector, SIN_COEFF};
use crate::stats::{ks_normal, linear_fit, KS_CRIT_001};

pub const DUALITY_TOL: f64 = 1e-10;
pub const KERNEL_SLOPE_TOL: f64 = 0.05;
pub const KERNEL_X_TOL: f64 = 1e-8;
pub const KERNEL_S_RANGE: (f64, f64) = (1e-3, 1e-1);
pub const KERNEL_S_POINTS: usize = 7;
pub const CONVOLUTION_N_SE: f64 = 3.0;
pub const CONVOLUTION_SAMPLES: usize = 10_000;
pub const BIOT_SAVART_TOL: f64 = 1e-12;
pub const NEUTRALITY_TOL: f64 = 1e-10;
pub const PICARD_GEOMETRIC_TOL: f64 = 0.1;
pub const APRIORI_RUNS: usize = 100;
/// Safety factor applied to the fitted `C_p` on the holdout ensemble.
pub const APRIORI_HOLDOUT_FACTOR: f64 = 2.0;
pub const FD_BUMP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-3;
pub const FD_DIRECTIONS: usize = 5;
/// Relative gap allowed between the linear Malliavin norm and the Riemann sum, in units of `dt`.
pub const RIEMANN_DT_FACTOR: f64 = 2.0;
pub const A_BOUND_EPS: [f64; 3] = [0.05, 0.1, 0.2];
/// Window lengths (in steps of `dt = 0.001`) for the moment-scaling regression.
pub const SCALING_WINDOWS: [usize; 3] = [5, 10, 20];
pub const SCALING_SLOPE_TOL: f64 = 0.15;
pub const MALLIAVIN_SAMPLES: usize = 100;
pub const DENSITY_LINEAR_SAMPLES: usize = 10_000;
pub const DENSITY_NONLINEAR_SAMPLES: usize = 2_000;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} {:>7.2}s / {:>4.0}s  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.budget_seconds,
            self.detail
        )
    }
}

/// Runs one criterion, timing it and folding errors and budget overruns into a failure.
fn timed(id: u8, name: &'static str, budget_seconds: f64, body: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let clock = Instant::now();
    let outcome = body();
    let seconds = clock.elapsed().as_secs_f64();
    let (pass, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let in_budget = seconds < budget_seconds;
    if !in_budget {
        detail.push_str(" | over runtime budget");
    }
    CheckResult {
        id,
        name,
        pass: pass && in_budget,
        seconds,
        budget_seconds,
        detail,
    }
}

/// Ratios below one, each within `tol` of the running geometric mean from the second on.
pub fn is_geometric(ratios: &[f64], tol: f64) -> bool {
    let mut log_sum = 0.0;
    ratios.iter().enumerate().all(|(i, &q)| {
        log_sum += q.ln();
        let mean = (log_sum / (i + 1) as f64).exp();
        q < 1.0 && (i == 0 || (q - mean).abs() <= tol)
    })
}

pub fn kernel_duality() -> CheckResult {
    timed(1, "kernel duality", 1.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let t = rng.gen_range(0.01..=1.0);
            let spec = KernelEvalSpec::for_time(t)?;
            let x = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
            let y = [rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)];
            worst = worst.max((eval_fourier(&spec, x, y) - eval_images(&spec, x, y)).abs());
        }
        Ok((worst <= DUALITY_TOL, format!("max |fourier - images| = {worst:.2e}")))
    })
}

pub fn kernel_estimates() -> CheckResult {
    timed(2, "kernel estimates", 30.0, || {
        let xs = [[0.5, 0.5], [2.0, 5.0], [4.5, 1.0]];
        let mut pass = true;
        let mut parts = Vec::new();
        for (gradient, betas) in [(true, [1.0, 1.2]), (false, [1.0, 1.5])] {
            for beta in betas {
                let fit = kernel_estimate_sweep(
                    beta,
                    gradient,
                    KERNEL_S_RANGE.0,
                    KERNEL_S_RANGE.1,
                    KERNEL_S_POINTS,
                    &xs,
                    KERNEL_SLOPE_TOL,
                )?;
                pass &= (fit.fitted_slope - fit.target_slope).abs() <= KERNEL_SLOPE_TOL && fit.x_spread < KERNEL_X_TOL;
                parts.push(format!(
                    "{}{beta}: {:.3}/{:.3}",
                    if gradient { "grad " } else { "" },
                    fit.fitted_slope,
                    fit.target_slope
                ));
            }
        }
        Ok((pass, parts.join(", ")))
    })
}

pub fn convolution_covariance() -> CheckResult {
    timed(3, "convolution covariance", 60.0, || {
        let mut pass = true;
        let mut parts = Vec::new();
        for (i, (b, t)) in [(1.0, 0.1), (1.0, 1.0), (2.0, 0.1), (2.0, 1.0)].into_iter().enumerate() {
            let row = convolution_check(b, t, 21, 10, CONVOLUTION_SAMPLES, 300 + i as u64, [PI, PI], CONVOLUTION_N_SE)?;
            pass &= row.pass;
            parts.push(format!(
                "b={b} t={t}: {:+.2}se",
                (row.empirical_var - row.closed_form) / row.stderr
            ));
        }
        Ok((pass, parts.join(", ")))
    })
}

pub fn biot_savart_exactness() -> CheckResult {
    timed(4, "biot-savart exactness", 1.0, || {
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let xi = SpectralField::random(21, 21, 1.0, 1.0, seed);
            let scale = xi.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
            worst = worst.max(velocity(&xi).curl().max_abs_diff(&xi) / scale);
        }
        let symbol_zero = half_lattice(21)
            .into_iter()
            .all(|k| velocity_symbol_divergence(k) == 0 && velocity_symbol_divergence(-k) == 0);
        let sin = SpectralField::from_modes(21, &[(WaveVector::new(1, 0), SIN_COEFF.into())]);
        let v = velocity(&sin);
        let mut sin_err: f64 = 0.0;
        for x in [[0.3, 1.2], [2.0, 4.0], [5.5, 0.1]] {
            sin_err = sin_err.max(v.u1.eval_at(x).abs()).max((v.u2.eval_at(x) + x[0].cos()).abs());
        }
        let pass = worst <= BIOT_SAVART_TOL && symbol_zero && sin_err <= BIOT_SAVART_TOL;
        Ok((
            pass,
            format!("curl rel {worst:.1e}, div symbol zero {symbol_zero}, sin case {sin_err:.1e}"),
        ))
    })
}

pub fn advection_neutrality() -> CheckResult {
    timed(5, "advection neutrality", 5.0, || {
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let xi = dealias(&SpectralField::random(21, 21, 1.0, 1.0, 1000 + seed));
            let div = flux(&xi)?.divergence();
            let scale = (div.energy() * xi.energy()).sqrt();
            worst = worst.max(div.inner(&xi).abs() / scale);
        }
        Ok((worst <= NEUTRALITY_TOL, format!("max relative pairing {worst:.1e}")))
    })
}

fn simulation(
    cutoff: usize,
    grid: usize,
    b: f64,
    noise_cutoff: usize,
    dt: f64,
    steps: usize,
    level: f64,
    ic: InitialCondition,
    nonlinear: bool,
) -> Result<Simulation> {
    let noise = NoiseSpec::new(b, noise_cutoff, dt, steps, 0)?;
    Simulation::new(cutoff, grid, TruncationSpec::new(level, 6.0)?, noise, &ic, nonlinear)
}

pub fn picard_contraction() -> CheckResult {
    timed(6, "picard contraction", 60.0, || {
        let ic = InitialCondition::Random { amplitude: 1.0, band: 6, seed: 11 };
        let sim = simulation(21, 64, 1.0, 21, 0.001, 50, 5.0, ic, true)?.with_seed(5);
        let path = NoisePath::generate(sim.noise());
        let r = picard_solve(&sim, &path, 1e-12, 60)?;
        let ratios = r.ratios();
        let pass = ratios.len() >= 3 && is_geometric(&ratios, PICARD_GEOMETRIC_TOL);
        let shown: Vec<String> = ratios.iter().map(|q| format!("{q:.3}")).collect();
        Ok((pass, format!("{} iterations, ratios [{}]", r.iterations, shown.join(" "))))
    })
}

pub fn apriori_bound() -> CheckResult {
    timed(7, "a priori bound", 300.0, || {
        // A zero start makes beta = xi - z grow only through the nonlinearity, so the fit is nontrivial.
        let sim = simulation(21, 64, 1.0, 21, 0.005, 100, 1e6, InitialCondition::Zero, true)?;
        let fit = apriori_ensemble(&sim, APRIORI_RUNS, 700)?;
        let cp = fit.iter().map(|e| e.required_cp()).fold(0.0, f64::max);
        let holdout = apriori_ensemble(&sim, APRIORI_RUNS, 701)?;
        let c = APRIORI_HOLDOUT_FACTOR * cp;
        let violations = holdout.iter().filter(|e| e.report(c).violated).count();
        let worst = holdout.iter().map(|e| e.report(c).ratio).fold(0.0, f64::max);
        Ok((
            cp.is_finite() && violations == 0,
            format!("fitted C_p = {cp:.3e}, holdout at {APRIORI_HOLDOUT_FACTOR}x: {violations} violations, max ratio {worst:.3}"),
        ))
    })
}

pub fn malliavin_oracle() -> CheckResult {
    timed(8, "malliavin oracle", 120.0, || {
        let steps = 20;
        let ic = InitialCondition::Random { amplitude: 3.0, band: 4, seed: 21 };
        let probe = simulation(12, 38, 2.0, 4, 0.005, steps, 1e6, ic, true)?.with_seed(8);
        // Start inside the blend zone of the cutoff so every term of the tangent is active.
        let level = (probe.lp_norm(probe.initial())? - 0.5).max(1.0);
        let sim = probe.with_truncation(TruncationSpec::new(level, 6.0)?);
        let path = NoisePath::generate(sim.noise());
        let traj = run_with_noise(&sim, &path)?;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dirs: Vec<Direction> = (0..FD_DIRECTIONS)
            .map(|_| Direction {
                mode: rng.gen_range(0..sim.noise().modes().len()),
                component: rng.gen_range(0..2),
                step: rng.gen_range(0..steps - 1),
            })
            .collect();
        let x = [1.3, 2.1];
        let ens = propagate_tangents(&sim, &traj, &dirs, steps)?;
        let mut worst: f64 = 0.0;
        for (d, y) in dirs.iter().zip(&ens.tangents) {
            let analytic = y.eval_at(x);
            let fd = finite_difference(&sim, &path, *d, steps, x, FD_BUMP)?;
            worst = worst.max((fd - analytic).abs() / analytic.abs());
        }
        Ok((worst <= FD_TOL, format!("max relative gap {worst:.2e} over {FD_DIRECTIONS} directions")))
    })
}

pub fn linear_malliavin_norm() -> CheckResult {
    timed(9, "linear malliavin norm", 30.0, || {
        let (cutoff, b, dt, steps) = (16, 2.0, 0.002, 50);
        let sim = simulation(cutoff, 50, b, cutoff, dt, steps, 1e6, InitialCondition::Zero, false)?;
        let traj = run(&sim)?;
        let ens = propagate_tangents(&sim, &traj, &all_directions(sim.noise(), steps), steps)?;
        let t = steps as f64 * dt;
        let norm = ens.malliavin_norm([PI, PI]);
        let mut riemann = 0.0;
        let c = cutoff as i64;
        for k1 in -c..=c {
            for k2 in -c..=c {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let l = (k1 * k1 + k2 * k2) as f64;
                riemann += (0..steps)
                    .map(|m| dt * l.powf(-b) * (-2.0 * l * (t - m as f64 * dt)).exp())
                    .sum::<f64>();
            }
        }
        riemann /= TAU * TAU;
        let rel = (norm - riemann).abs() / riemann;
        let closed = convolution_variance(b, cutoff, 1.0, t)?;
        Ok((
            rel <= RIEMANN_DT_FACTOR * dt,
            format!("relative gap {rel:.2e} (limit {:.1e}), closed form gap {:.1e}", RIEMANN_DT_FACTOR * dt, (norm - closed).abs() / closed),
        ))
    })
}

pub fn nondegeneracy() -> CheckResult {
    timed(10, "nondegeneracy", 600.0, || {
        let (b, kw) = (2.0, 2);
        let x = [PI, PI];
        let ic = InitialCondition::Random { amplitude: 1.0, band: 4, seed: 5 };

        let (dt, steps) = (0.005, 50);
        let horizon = dt * steps as f64;
        let mut bound_ok = true;
        for eps in A_BOUND_EPS {
            let (a, lb) = lower_bound_a(b, kw, 1.0, eps, horizon, horizon)?;
            bound_ok &= a >= lb;
        }
        let sim = simulation(10, 32, b, kw, dt, steps, 1e6, ic.clone(), true)?;
        let samples = malliavin_ensemble(&sim, MALLIAVIN_SAMPLES, 1000, steps, 10, x)?;
        let min_norm = samples.iter().map(|s| s.norm_sq).fold(f64::INFINITY, f64::min);
        let split_ok = samples.iter().all(|s| s.window.0 >= 0.5 * s.window.1 - s.window.2);

        let (dt, steps) = (0.001, 100);
        let sim = simulation(10, 32, b, kw, dt, steps, 1e6, ic, true)?;
        let moments = window_moments(&sim, MALLIAVIN_SAMPLES, 2000, steps, &SCALING_WINDOWS, x)?;
        let lx: Vec<f64> = SCALING_WINDOWS.iter().map(|&w| (w as f64 * dt).ln()).collect();
        let ly: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
        let (slope, _) = linear_fit(&lx, &ly);
        let target = sim.truncation().p() / 2.0;

        let pass = bound_ok && min_norm > 0.0 && split_ok && (slope - target).abs() <= SCALING_SLOPE_TOL;
        Ok((
            pass,
            format!("A >= bound {bound_ok}, split {split_ok}, min ||D||^2 {min_norm:.3e}, window slope {slope:.3}/{target}"),
        ))
    })
}

pub fn density_diagnostics() -> CheckResult {
    timed(11, "density diagnostics", 600.0, || {
        let x = [PI, PI];
        let linear = simulation(21, 64, 1.0, 21, 0.1, 10, 1e6, InitialCondition::Zero, false)?;
        let lin = ensemble(&linear, 10, x, DENSITY_LINEAR_SAMPLES, 1100, "linear")?;
        let sd = convolution_variance(1.0, 21, 1.0, 1.0)?.sqrt();
        let ks = ks_normal(&lin.values, 0.0, sd);
        let ks_limit = KS_CRIT_001 / (lin.values.len() as f64).sqrt();

        let nonlinear = simulation(21, 64, 1.0, 21, 0.005, 20, 1e6, InitialCondition::SinX1Cos2X2 { amplitude: 1.0 }, true)?;
        let nl = ensemble(&nonlinear, 20, x, DENSITY_NONLINEAR_SAMPLES, 1101, "nonlinear")?;
        let report = continuity_diagnostics(&nl.values)?;
        Ok((
            ks < ks_limit && report.pass,
            format!(
                "linear KS {ks:.4} < {ks_limit:.4}; nonlinear atoms {} split KS {:.4}/{:.4} local mass {}",
                report.atom_max_multiplicity, report.ks_stat, report.ks_threshold, report.local_mass_pass
            ),
        ))
    })
}

/// Small config shared by the determinism check.
pub fn determinism_config() -> RunConfig {
    RunConfig::from_json(
        r#"{"b": 1.0, "dt": 0.01, "horizon": 0.1, "cutoff": 8, "grid": 26,
            "ic": "random", "ic_amplitude": 1.0, "samples": 200, "snapshot_every": 5, "seed": 12}"#,
    )
    .expect("built-in config is valid")
}

pub fn determinism() -> CheckResult {
    timed(12, "determinism", 120.0, || {
        let cfg = determinism_config();
        let root = std::env::temp_dir().join(format!("stochvort-determinism-{}", std::process::id()));
        let mut identical = true;
        let mut compared = 0;
        for sub in [Subcommand::Simulate, Subcommand::Density] {
            let mut payloads = Vec::new();
            for (run_id, threads) in [(0, 1), (1, 4), (2, 4)] {
                let dir = root.join(format!("{sub}-{run_id}"));
                let outcome = dispatch(sub, &cfg, None, &dir, Some(threads))?;
                let mut files: Vec<(String, Vec<u8>)> = Vec::new();
                for name in outcome.files.iter().filter(|f| f.ends_with(".csv")) {
                    files.push((name.clone(), std::fs::read(dir.join(name))?));
                }
                payloads.push(files);
            }
            compared += payloads[0].len();
            identical &= !payloads[0].is_empty() && payloads.iter().all(|p| p == &payloads[0]);
        }
        let _ = std::fs::remove_dir_all(&root);
        Ok((identical, format!("{compared} CSV payloads identical across runs and thread counts {{1,4}}: {identical}")))
    })
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        kernel_duality(),
        kernel_estimates(),
        convolution_covariance(),
        biot_savart_exactness(),
        advection_neutrality(),
        picard_contraction(),
        apriori_bound(),
        malliavin_oracle(),
        linear_malliavin_norm(),
        nondegeneracy(),
        density_diagnostics(),
        determinism(),
    ]
}
