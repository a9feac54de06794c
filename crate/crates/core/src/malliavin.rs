//! Malliavin derivative of the discrete solution with respect to the noise
//! increments, propagated forward through the linearized scheme.
//!
//! A direction is one Brownian increment `(mode j, cos|sin, step m)`. Its
//! tangent is zero up to step `m`, equals the injected basis element at step
//! `m + 1`, and then follows
//! `Y <- S(dt) Y + Phi(dt) (-div [Theta (v(Y) xi + v(xi) Y) + Theta' dN[Y] q(xi)])`,
//! where `dN[Y]` is the directional derivative of `||xi||_{L^p}`.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::biot_savart::{product_grid, truncated_flux, velocity};
use crate::error::{Error, Result};
use crate::heat_kernel::{neg_divergence, semigroup_apply};
use crate::noise::{NoisePath, NoiseSpec};
use crate::rng::derive_seed;
use crate::solver::{run_with_noise, Simulation, Trajectory};
use crate::spectral::{from_grid, to_grid, GridField, SpectralField, VectorSpectralField};

/// One noise coordinate: increment `component` (0 = cos, 1 = sin) of mode `mode` at step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub mode: usize,
    pub component: usize,
    pub step: usize,
}

/// Every direction with step below `steps`.
pub fn all_directions(noise: &NoiseSpec, steps: usize) -> Vec<Direction> {
    window_directions(noise, steps, steps)
}

/// Directions whose step lies in the last `window` steps before `steps`.
pub fn window_directions(noise: &NoiseSpec, steps: usize, window: usize) -> Vec<Direction> {
    let mut out = Vec::new();
    for step in steps.saturating_sub(window)..steps {
        for mode in 0..noise.modes().len() {
            for component in 0..2 {
                out.push(Direction { mode, component, step });
            }
        }
    }
    out
}

fn require_p(sim: &Simulation) -> Result<()> {
    let p = sim.truncation().p();
    if p > 4.0 {
        Ok(())
    } else {
        Err(Error::constraint(
            "p",
            p,
            "p > 4",
            "the solution is Malliavin differentiable in D^{1,p} only for p > 4",
        ))
    }
}

/// `d xi_{m+1} / d dB` for the direction: the weighted real basis element.
pub fn injection(sim: &Simulation, dir: Direction) -> SpectralField {
    let noise = sim.noise();
    let k = noise.modes()[dir.mode];
    let w = noise.mode_weight(k) * noise.ou_factor(k) * FRAC_1_SQRT_2;
    let c = if dir.component == 0 {
        Complex64::new(w, 0.0)
    } else {
        Complex64::new(0.0, -w)
    };
    SpectralField::from_modes(sim.cutoff(), &[(k, c)])
}

/// Base-state data the linearized step needs.
struct Linearization {
    xi_grid: GridField,
    vel_grid: [GridField; 2],
    flux: VectorSpectralField,
    theta: f64,
    theta_prime: f64,
    /// `||xi||^{1-p} |xi|^{p-2} xi h^2` on the norm grid, when `Theta' != 0`.
    norm_gradient: Option<GridField>,
}

impl Linearization {
    fn new(sim: &Simulation, xi: &SpectralField) -> Result<Self> {
        let nq = product_grid(sim.cutoff());
        let tf = truncated_flux(xi, sim.truncation(), sim.grid())?;
        let v = velocity(xi);
        let norm_gradient = if tf.theta_prime != 0.0 && tf.norm > 1e-8 {
            let p = sim.truncation().p();
            let g = to_grid(xi, sim.grid())?;
            let h2 = g.spacing() * g.spacing();
            let scale = tf.norm.powf(1.0 - p) * h2;
            let vals = g.values().iter().map(|&x| x.abs().powf(p - 2.0) * x * scale).collect();
            Some(GridField::new(sim.grid(), vals)?)
        } else {
            None
        };
        Ok(Self {
            xi_grid: to_grid(xi, nq)?,
            vel_grid: [to_grid(&v.u1, nq)?, to_grid(&v.u2, nq)?],
            flux: tf.flux,
            theta: tf.theta,
            theta_prime: tf.theta_prime,
            norm_gradient,
        })
    }

    /// `Theta (v(Y) xi + v(xi) Y) + Theta' dN[Y] q(xi)`.
    fn linear_flux(&self, y: &SpectralField, sim: &Simulation) -> Result<VectorSpectralField> {
        let cutoff = sim.cutoff();
        let mut out = VectorSpectralField {
            u1: SpectralField::zeros(cutoff),
            u2: SpectralField::zeros(cutoff),
        };
        if self.theta != 0.0 {
            let nq = self.xi_grid.n();
            let yg = to_grid(y, nq)?;
            let vy = velocity(y);
            let vyg = [to_grid(&vy.u1, nq)?, to_grid(&vy.u2, nq)?];
            let mut comps = Vec::with_capacity(2);
            for c in 0..2 {
                let vals: Vec<f64> = (0..nq * nq)
                    .map(|i| {
                        vyg[c].values()[i] * self.xi_grid.values()[i] + self.vel_grid[c].values()[i] * yg.values()[i]
                    })
                    .collect();
                comps.push(&from_grid(&GridField::new(nq, vals)?, cutoff)? * self.theta);
            }
            out.u2 = comps.pop().expect("two components");
            out.u1 = comps.pop().expect("two components");
        }
        if let Some(ng) = &self.norm_gradient {
            let yg = to_grid(y, ng.n())?;
            let dn: f64 = ng.values().iter().zip(yg.values()).map(|(a, b)| a * b).sum();
            let s = self.theta_prime * dn;
            out.u1 = &out.u1 + &(&self.flux.u1 * s);
            out.u2 = &out.u2 + &(&self.flux.u2 * s);
        }
        Ok(out)
    }
}

/// Tangents of all requested directions at one mesh step.
#[derive(Debug, Clone)]
pub struct TangentEnsemble {
    pub directions: Vec<Direction>,
    pub tangents: Vec<SpectralField>,
    /// Heat flow of each injection to the same step (the tangent with the flux switched off).
    pub linear_parts: Vec<SpectralField>,
    pub step: usize,
    pub time: f64,
    pub dt: f64,
}

/// Propagates tangents along `traj` up to mesh step `step`.
pub fn propagate_tangents(
    sim: &Simulation,
    traj: &Trajectory,
    directions: &[Direction],
    step: usize,
) -> Result<TangentEnsemble> {
    require_p(sim)?;
    if traj.states.len() <= step {
        return Err(Error::Invalid(format!(
            "trajectory stores {} states, tangents requested at step {step}",
            traj.states.len()
        )));
    }
    let first = directions.iter().map(|d| d.step + 1).filter(|&m| m <= step).min().unwrap_or(step);
    let lin: Vec<Option<Linearization>> = (0..step)
        .into_par_iter()
        .map(|m| {
            if m < first || !sim.nonlinear() {
                Ok(None)
            } else {
                Linearization::new(sim, &traj.states[m]).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(SpectralField, SpectralField)> = directions
        .par_iter()
        .map(|&dir| -> Result<(SpectralField, SpectralField)> {
            let zero = SpectralField::zeros(sim.cutoff());
            if dir.step + 1 > step {
                return Ok((zero.clone(), zero));
            }
            let inj = injection(sim, dir);
            if !sim.nonlinear() {
                let l = semigroup_apply((step - dir.step - 1) as f64 * sim.dt(), &inj)?;
                return Ok((l.clone(), l));
            }
            let mut y = inj.clone();
            let mut l = inj;
            for point in lin.iter().take(step).skip(dir.step + 1) {
                l = sim.decay().apply(&l);
                y = match point {
                    Some(point) => {
                        let forcing = neg_divergence(&point.linear_flux(&y, sim)?);
                        sim.decay().combine(&y, sim.weight(), &forcing)
                    }
                    None => sim.decay().apply(&y),
                };
            }
            Ok((y, l))
        })
        .collect::<Result<_>>()?;
    let (tangents, linear_parts) = pairs.into_iter().unzip();
    Ok(TangentEnsemble {
        directions: directions.to_vec(),
        tangents,
        linear_parts,
        step,
        time: step as f64 * sim.dt(),
        dt: sim.dt(),
    })
}

impl TangentEnsemble {
    /// `sum_dirs dt Y(x)^2`, the discrete `H_T` norm of `D xi(t, x)`.
    pub fn malliavin_norm(&self, x: [f64; 2]) -> f64 {
        self.tangents.iter().map(|y| self.dt * y.eval_at(x).powi(2)).sum()
    }

    /// Split over directions in the last `window` steps: returns
    /// `(norm_sq, A, I)` with `A = sum dt L(x)^2` and `I = sum dt (Y - L)(x)^2`.
    pub fn window_split(&self, x: [f64; 2], window: usize) -> (f64, f64, f64) {
        let lo = self.step.saturating_sub(window);
        let (mut norm, mut a, mut i) = (0.0, 0.0, 0.0);
        for ((d, y), l) in self.directions.iter().zip(&self.tangents).zip(&self.linear_parts) {
            if d.step < lo || d.step >= self.step {
                continue;
            }
            let (yv, lv) = (y.eval_at(x), l.eval_at(x));
            norm += self.dt * yv * yv;
            a += self.dt * lv * lv;
            i += self.dt * (yv - lv) * (yv - lv);
        }
        (norm, a, i)
    }
}

/// Closed-form window mass `A(x, eps)` and its lower bound `eps / ((2 pi)^2 (1 + 2T))`.
pub fn lower_bound_a(b: f64, cutoff: usize, amplitude: f64, eps: f64, t: f64, horizon: f64) -> Result<(f64, f64)> {
    if !(b > 1.0) {
        return Err(Error::constraint(
            "b",
            b,
            "b > 1",
            "nondegeneracy needs a trace-class noise covariance",
        ));
    }
    if !(eps > 0.0 && eps < t) {
        return Err(Error::constraint("eps", eps, "0 < eps < t", "window must lie inside [0, t]"));
    }
    let c = cutoff as i64;
    let mut s = 0.0;
    for k1 in -c..=c {
        for k2 in -c..=c {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let l = (k1 * k1 + k2 * k2) as f64;
            s += l.powf(-b - 1.0) / 2.0 * -(-2.0 * l * eps).exp_m1();
        }
    }
    Ok((amplitude * amplitude * s / (TAU * TAU), eps / (TAU * TAU * (1.0 + 2.0 * horizon))))
}

/// Central bump-and-rerun derivative of `xi(t_step, x)` along one direction.
pub fn finite_difference(
    sim: &Simulation,
    path: &NoisePath,
    dir: Direction,
    step: usize,
    x: [f64; 2],
    h: f64,
) -> Result<f64> {
    let plus = run_with_noise(sim, &path.bumped(dir.mode, dir.component, dir.step, h).truncated(step))?;
    let minus = run_with_noise(sim, &path.bumped(dir.mode, dir.component, dir.step, -h).truncated(step))?;
    Ok((plus.final_state().eval_at(x) - minus.final_state().eval_at(x)) / (2.0 * h))
}

/// Per-sample Malliavin statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MalliavinSample {
    pub sample: usize,
    pub norm_sq: f64,
    /// Window split `(norm_sq, A, I)` restricted to the last `window` steps.
    pub window: (f64, f64, f64),
}

/// Full and window Malliavin norms of `xi(t_step, x)` over `samples` seeds.
pub fn malliavin_ensemble(
    sim: &Simulation,
    samples: usize,
    seed: u64,
    step: usize,
    window: usize,
    x: [f64; 2],
) -> Result<Vec<MalliavinSample>> {
    require_p(sim)?;
    (0..samples)
        .map(|i| {
            sample_norms(sim, i, seed, step, window, x).map_err(|e| Error::Sample {
                sample: i,
                source: Box::new(e),
            })
        })
        .collect()
}

fn sample_norms(sim: &Simulation, i: usize, seed: u64, step: usize, window: usize, x: [f64; 2]) -> Result<MalliavinSample> {
    let s = sim.with_seed(derive_seed(seed, i as u64));
    let path = NoisePath::generate(s.noise()).truncated(step);
    let traj = run_with_noise(&s, &path)?;
    let dirs = all_directions(s.noise(), step);
    let ens = propagate_tangents(&s, &traj, &dirs, step)?;
    Ok(MalliavinSample {
        sample: i,
        norm_sq: ens.malliavin_norm(x),
        window: ens.window_split(x, window),
    })
}

/// `E[(||D xi||^2_window)^(p/2)]` for each window length, one tangent solve per sample.
pub fn window_moments(
    sim: &Simulation,
    samples: usize,
    seed: u64,
    step: usize,
    windows: &[usize],
    x: [f64; 2],
) -> Result<Vec<f64>> {
    require_p(sim)?;
    let p = sim.truncation().p();
    let widest = windows.iter().copied().max().unwrap_or(0);
    let per: Vec<Vec<f64>> = (0..samples)
        .map(|i| -> Result<Vec<f64>> {
            let s = sim.with_seed(derive_seed(seed, i as u64));
            let path = NoisePath::generate(s.noise()).truncated(step);
            let traj = run_with_noise(&s, &path).map_err(|e| Error::Sample {
                sample: i,
                source: Box::new(e),
            })?;
            let dirs = window_directions(s.noise(), step, widest);
            let ens = propagate_tangents(&s, &traj, &dirs, step)?;
            Ok(windows.iter().map(|&w| ens.window_split(x, w).0.powf(p / 2.0)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..windows.len())
        .map(|j| per.iter().map(|v| v[j]).sum::<f64>() / samples as f64)
        .collect())
}

/// Empirical `P(||D xi||^2 < delta)` on a ladder of thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallBallReport {
    pub deltas: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Frequencies do not increase as `delta` decreases.
    pub monotone: bool,
}

pub fn small_ball_probe(norms: &[f64], deltas: &[f64]) -> Result<SmallBallReport> {
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::constraint("delta", "non-positive entry", "delta > 0", "small-ball threshold"));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = norms.len().max(1) as f64;
    let frequencies: Vec<f64> = sorted
        .iter()
        .map(|&d| norms.iter().filter(|&&v| v < d).count() as f64 / n)
        .collect();
    let monotone = frequencies.windows(2).all(|w| w[0] <= w[1]);
    Ok(SmallBallReport {
        deltas: sorted,
        frequencies,
        monotone,
    })
}
