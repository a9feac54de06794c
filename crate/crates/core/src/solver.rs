//! Exponential-Euler integration of the truncated mild equation, the Picard
//! construction of its solution and the a priori `L^p` monitor.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::biot_savart::{truncated_flux, TruncationSpec};
use crate::error::{Error, Result};
use crate::heat_kernel::{duhamel_weight, neg_divergence};
use crate::noise::{convolution_path, NoisePath, NoiseSpec};
use crate::rng::derive_seed;
use crate::spectral::{lp_norm, to_grid, Multiplier, SpectralField, WaveVector};

/// Abort threshold on `||xi||_{L^2}`.
pub const BLOW_UP_L2: f64 = 1e12;

/// Initial vorticity.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// `amplitude sin(x1)`.
    SinX1 { amplitude: f64 },
    /// `amplitude (sin(x1) + cos(2 x2))`.
    SinX1Cos2X2 { amplitude: f64 },
    /// Random field with `|k|^(-1)` decay on `max|k_i| <= band`.
    Random { amplitude: f64, band: usize, seed: u64 },
    Field(SpectralField),
}

impl InitialCondition {
    pub fn build(&self, cutoff: usize) -> Result<SpectralField> {
        let mut f = SpectralField::zeros(cutoff);
        let need = |k: usize| -> Result<()> {
            if cutoff < k {
                Err(Error::Invalid(format!("initial condition needs cutoff >= {k}")))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Zero => {}
            Self::SinX1 { amplitude } => {
                need(1)?;
                f.set_pair(WaveVector::new(1, 0), Complex64::new(0.0, -PI * amplitude));
            }
            Self::SinX1Cos2X2 { amplitude } => {
                need(2)?;
                f.set_pair(WaveVector::new(1, 0), Complex64::new(0.0, -PI * amplitude));
                f.set_pair(WaveVector::new(0, 2), Complex64::new(PI * amplitude, 0.0));
            }
            Self::Random { amplitude, band, seed } => {
                f = SpectralField::random(cutoff, *band, 1.0, *amplitude, *seed);
            }
            Self::Field(g) => {
                if g.cutoff() > cutoff && g.max_abs_diff(&g.with_cutoff(cutoff)) > 0.0 {
                    return Err(Error::Invalid("initial field has modes beyond the cutoff".into()));
                }
                f = g.with_cutoff(cutoff);
            }
        }
        Ok(f)
    }
}

/// Validated parameters of one simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    cutoff: usize,
    grid: usize,
    dt: f64,
    steps: usize,
    truncation: TruncationSpec,
    noise: NoiseSpec,
    xi0: SpectralField,
    nonlinear: bool,
    decay: Multiplier,
    weight: Multiplier,
}

impl Simulation {
    /// `noise` fixes `dt`; the horizon is `noise.steps() * dt`.
    pub fn new(
        cutoff: usize,
        grid: usize,
        truncation: TruncationSpec,
        noise: NoiseSpec,
        ic: &InitialCondition,
        nonlinear: bool,
    ) -> Result<Self> {
        if grid < 2 * cutoff + 2 {
            return Err(Error::Aliasing { n: grid, cutoff });
        }
        if noise.cutoff() > cutoff {
            return Err(Error::Invalid(format!(
                "noise cutoff {} exceeds solution cutoff {cutoff}",
                noise.cutoff()
            )));
        }
        let dt = noise.dt();
        Ok(Self {
            cutoff,
            grid,
            dt,
            steps: noise.steps(),
            truncation,
            xi0: ic.build(cutoff)?,
            nonlinear,
            decay: Multiplier::new(cutoff, |k| (-(k.norm_sq() as f64) * dt).exp()),
            weight: Multiplier::new(cutoff, |k| duhamel_weight(k.norm_sq() as f64, dt)),
            noise,
        })
    }

    /// Number of steps covering `horizon` with step `dt`, rejecting `horizon < dt`.
    pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
        if !(dt > 0.0) {
            return Err(Error::constraint("dt", dt, "dt > 0", "time step"));
        }
        if !(horizon >= dt * (1.0 - 1e-12)) {
            return Err(Error::constraint("horizon", horizon, "T >= dt", "time horizon"));
        }
        Ok((horizon / dt).round() as usize)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }
    pub fn grid(&self) -> usize {
        self.grid
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }
    pub fn truncation(&self) -> &TruncationSpec {
        &self.truncation
    }
    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }
    pub fn initial(&self) -> &SpectralField {
        &self.xi0
    }
    pub fn nonlinear(&self) -> bool {
        self.nonlinear
    }

    /// Same setup with another noise seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.noise = s.noise.with_seed(seed);
        s
    }

    pub fn with_truncation(&self, truncation: TruncationSpec) -> Self {
        let mut s = self.clone();
        s.truncation = truncation;
        s
    }

    pub fn with_nonlinear(&self, nonlinear: bool) -> Self {
        let mut s = self.clone();
        s.nonlinear = nonlinear;
        s
    }

    pub fn with_initial(&self, xi0: SpectralField) -> Self {
        let mut s = self.clone();
        s.xi0 = xi0.with_cutoff(self.cutoff);
        s
    }

    /// `S(dt)` as a multiplier.
    pub fn decay(&self) -> &Multiplier {
        &self.decay
    }

    /// `(1 - exp(-|k|^2 dt)) / |k|^2` as a multiplier.
    pub fn weight(&self) -> &Multiplier {
        &self.weight
    }

    /// `L^p` norm of a field on the simulation grid.
    pub fn lp_norm(&self, f: &SpectralField) -> Result<f64> {
        lp_norm(&to_grid(f, self.grid)?, self.truncation.p())
    }

    fn drift(&self, xi: &SpectralField) -> Result<(SpectralField, f64)> {
        let tf = truncated_flux(xi, &self.truncation, self.grid)?;
        let forcing = if self.nonlinear && tf.theta != 0.0 {
            neg_divergence(&tf.truncated())
        } else {
            SpectralField::zeros(self.cutoff)
        };
        Ok((forcing, tf.norm))
    }
}

/// One exponential-Euler step: `S(dt) xi + Phi(dt) (-div q_N(xi)) + eta`.
///
/// Returns the new state and `||xi||_{L^p}` of the input.
pub fn step(sim: &Simulation, xi: &SpectralField, eta: &SpectralField, time: f64) -> Result<(SpectralField, f64)> {
    let (forcing, norm) = sim.drift(xi)?;
    let next = &sim.decay.combine(xi, &sim.weight, &forcing) + eta;
    check_state(&next, time + sim.dt)?;
    Ok((next, norm))
}

fn check_state(xi: &SpectralField, time: f64) -> Result<()> {
    if !xi.is_finite() {
        return Err(Error::BlowUp {
            time,
            reason: "non-finite coefficients".into(),
        });
    }
    let l2 = xi.energy().sqrt();
    if l2 > BLOW_UP_L2 {
        return Err(Error::BlowUp {
            time,
            reason: format!("L2 norm {l2:e} exceeds {BLOW_UP_L2:e}"),
        });
    }
    Ok(())
}

/// States on the time mesh together with the paired convolution path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub z_states: Vec<SpectralField>,
    /// `||xi(t)||_{L^p}` at each mesh time.
    pub lp_norms: Vec<f64>,
    /// First mesh time with `||xi||_{L^p} >= N`, as `(step, time)`.
    pub sigma_hit: Option<(usize, f64)>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Runs `sim` with a freshly generated noise path.
pub fn run(sim: &Simulation) -> Result<Trajectory> {
    run_with_noise(sim, &NoisePath::generate(sim.noise()))
}

/// Runs for `path.steps()` steps driven by `path`.
pub fn run_with_noise(sim: &Simulation, path: &NoisePath) -> Result<Trajectory> {
    if path.modes() != sim.noise.modes() {
        return Err(Error::Invalid("noise path modes do not match the simulation".into()));
    }
    let steps = path.steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut z_states = Vec::with_capacity(steps + 1);
    let mut lp_norms = Vec::with_capacity(steps + 1);
    let mut xi = sim.xi0.clone();
    let mut z = SpectralField::zeros(sim.cutoff);
    for m in 0..steps {
        let t = m as f64 * sim.dt;
        let eta = path.ou_increment(&sim.noise, m, sim.cutoff)?;
        let (next, norm) = step(sim, &xi, &eta, t)?;
        let z_next = &sim.decay.apply(&z) + &eta;
        times.push(t);
        lp_norms.push(norm);
        states.push(std::mem::replace(&mut xi, next));
        z_states.push(std::mem::replace(&mut z, z_next));
    }
    times.push(steps as f64 * sim.dt);
    lp_norms.push(sim.lp_norm(&xi)?);
    states.push(xi);
    z_states.push(z);
    let level = sim.truncation.level();
    let sigma_hit = lp_norms
        .iter()
        .position(|&v| v >= level)
        .map(|m| (m, times[m]));
    Ok(Trajectory {
        times,
        states,
        z_states,
        lp_norms,
        sigma_hit,
    })
}

/// Result of the Picard iteration.
#[derive(Debug, Clone)]
pub struct PicardResult {
    /// Last iterate on the time mesh.
    pub states: Vec<SpectralField>,
    /// `sup_t ||xi^{k+1} - xi^k||_{L^p}` for each iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl PicardResult {
    /// Successive-difference ratios `d_{k+1} / d_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.history.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Largest observed ratio; the empirical contraction factor.
    pub fn contraction_factor(&self) -> f64 {
        self.ratios().into_iter().fold(0.0, f64::max)
    }
}

/// Iterates `xi^{k+1} = S(t) xi0 + z + J q_N(xi^k)` from `xi^0 = S(t) xi0 + z`
/// with a frozen noise path, until `sup_t ||xi^{k+1} - xi^k||_{L^p} < tol`.
pub fn picard_solve(sim: &Simulation, path: &NoisePath, tol: f64, max_iter: usize) -> Result<PicardResult> {
    let z = convolution_path(sim.noise(), path)?
        .into_iter()
        .map(|f| f.with_cutoff(sim.cutoff))
        .collect::<Vec<_>>();
    let mut linear = Vec::with_capacity(z.len());
    let mut free = sim.xi0.clone();
    for zm in &z {
        linear.push(&free + zm);
        free = sim.decay.apply(&free);
    }
    let mut current = linear.clone();
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let mut next = Vec::with_capacity(current.len());
        let mut duhamel = SpectralField::zeros(sim.cutoff);
        next.push(linear[0].clone());
        for m in 0..current.len() - 1 {
            let (forcing, _) = sim.drift(&current[m])?;
            duhamel = sim.decay.combine(&duhamel, &sim.weight, &forcing);
            next.push(&linear[m + 1] + &duhamel);
        }
        let mut diff: f64 = 0.0;
        for (a, b) in next.iter().zip(&current) {
            diff = diff.max(sim.lp_norm(&(a - b))?);
        }
        history.push(diff);
        current = next;
        if diff < tol {
            return Ok(PicardResult {
                states: current,
                history,
                iterations: it,
            });
        }
    }
    let last_ratio = match history.as_slice() {
        [.., a, b] => b / a,
        _ => f64::NAN,
    };
    Err(Error::NonContraction {
        iterations: max_iter,
        last_ratio,
    })
}

/// `sup_t ||xi_h(t) - xi_{h/2}(t)||_{L^2}` over shared mesh times for the
/// ladder `h = dt 2^(levels-1), ..., dt`, coarsest pair first.
///
/// Coarse noise paths are exact compositions of the fine one.
pub fn refinement_changes(sim: &Simulation, levels: usize) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::constraint("levels", levels, "levels >= 2", "refinement ladder"));
    }
    let mut ladder = vec![(sim.noise.clone(), NoisePath::generate(&sim.noise))];
    for _ in 1..levels {
        let (spec, path) = ladder.last().expect("ladder is nonempty");
        let coarse = path.coarsen(spec)?;
        ladder.push(coarse);
    }
    let runs = ladder
        .iter()
        .map(|(spec, path)| {
            let s = Simulation::new(
                sim.cutoff,
                sim.grid,
                sim.truncation,
                spec.clone(),
                &InitialCondition::Field(sim.xi0.clone()),
                sim.nonlinear,
            )?;
            run_with_noise(&s, path)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut changes = Vec::with_capacity(levels - 1);
    for i in (1..levels).rev() {
        let (coarse, fine) = (&runs[i], &runs[i - 1]);
        let sup = coarse
            .states
            .iter()
            .zip(fine.states.iter().step_by(2))
            .map(|(a, b)| (a - b).energy().sqrt())
            .fold(0.0, f64::max);
        changes.push(sup);
    }
    Ok(changes)
}

/// Comparison of a trajectory against the a priori `L^p` bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriReport {
    /// `sup_t ||xi(t) - z(t)||_p^p`.
    pub sup_beta_p: f64,
    /// `||xi0||_p^p`.
    pub initial_p: f64,
    /// `sup_t ||z(t)||_p`.
    pub sup_z: f64,
    pub c1: f64,
    pub c2: f64,
    pub bound: f64,
    pub ratio: f64,
    pub violated: bool,
}

/// Norm data of one trajectory that the bound depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AprioriInputs {
    pub sup_beta_p: f64,
    pub initial_p: f64,
    pub sup_z: f64,
    pub horizon: f64,
    pub p: f64,
}

impl AprioriInputs {
    pub fn from_trajectory(traj: &Trajectory, sim: &Simulation) -> Result<Self> {
        let p = sim.truncation.p();
        let mut sup_beta: f64 = 0.0;
        let mut sup_z: f64 = 0.0;
        for (xi, z) in traj.states.iter().zip(&traj.z_states) {
            sup_beta = sup_beta.max(sim.lp_norm(&(xi - z))?);
            sup_z = sup_z.max(sim.lp_norm(z)?);
        }
        Ok(Self {
            sup_beta_p: sup_beta.powf(p),
            initial_p: sim.lp_norm(&traj.states[0])?.powf(p),
            sup_z,
            horizon: traj.times.last().copied().unwrap_or(0.0),
            p,
        })
    }

    pub fn report(&self, cp: f64) -> AprioriReport {
        let c1 = cp * self.horizon * self.sup_z.powf(2.0 * self.p);
        let c2 = cp * self.horizon * (1.0 + self.sup_z * self.sup_z);
        let bound = (self.initial_p + c1) * c2.exp();
        let ratio = if bound > 0.0 {
            self.sup_beta_p / bound
        } else if self.sup_beta_p == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        AprioriReport {
            sup_beta_p: self.sup_beta_p,
            initial_p: self.initial_p,
            sup_z: self.sup_z,
            c1,
            c2,
            bound,
            ratio,
            violated: ratio > 1.0,
        }
    }

    /// Smallest `C_p` with `ratio <= 1`, to relative precision `1e-10`.
    pub fn required_cp(&self) -> f64 {
        if !self.report(0.0).violated {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.report(hi).violated {
            hi *= 2.0;
            if hi > 1e300 {
                return f64::INFINITY;
            }
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 * hi {
            let mid = 0.5 * (lo + hi);
            if self.report(mid).violated {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// A priori bound check of one trajectory with constant `cp`.
pub fn apriori_monitor(traj: &Trajectory, sim: &Simulation, cp: f64) -> Result<AprioriReport> {
    Ok(AprioriInputs::from_trajectory(traj, sim)?.report(cp))
}

/// Bound inputs for `runs` independent noise seeds derived from `seed`.
pub fn apriori_ensemble(sim: &Simulation, runs: usize, seed: u64) -> Result<Vec<AprioriInputs>> {
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let s = sim.with_seed(derive_seed(seed, i as u64));
            let traj = run(&s).map_err(|e| Error::Sample {
                sample: i,
                source: Box::new(e),
            })?;
            AprioriInputs::from_trajectory(&traj, &s)
        })
        .collect()
}
