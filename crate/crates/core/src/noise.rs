//! Gaussian noise with covariance `(-Laplacian)^(-b)` and the stochastic
//! convolution it drives.
//!
//! The noise is expanded in the real basis `cos(k.x)/(sqrt(2) pi)`,
//! `sin(k.x)/(sqrt(2) pi)` over the half lattice, with weight `|k|^(-b)`.
//! Each Fourier mode of the convolution is an Ornstein-Uhlenbeck process and
//! is advanced with its exact transition.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::heat_kernel::semigroup_apply;
use crate::rng::{derive_seed, ModeStream};
use crate::spectral::{half_lattice, lp_norm, to_grid, SpectralField, WaveVector};
use crate::stats::{variance, variance_stderr};

/// Covariance exponent, retained modes and time mesh of the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    b: f64,
    cutoff: usize,
    dt: f64,
    steps: usize,
    seed: u64,
    amplitude: f64,
    modes: Vec<WaveVector>,
}

impl NoiseSpec {
    pub fn new(b: f64, cutoff: usize, dt: f64, steps: usize, seed: u64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::constraint(
                "b",
                b,
                "b > 0",
                "the stochastic convolution converges only for b > 0",
            ));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::constraint("dt", dt, "dt > 0", "time step"));
        }
        Ok(Self {
            b,
            cutoff,
            dt,
            steps,
            seed,
            amplitude: 1.0,
            modes: half_lattice(cutoff),
        })
    }

    /// Scales the noise by `amplitude` (zero switches it off).
    pub fn with_amplitude(mut self, amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::constraint("noise_amplitude", amplitude, "amplitude >= 0", "noise scale"));
        }
        self.amplitude = amplitude;
        Ok(self)
    }

    /// Restricts the noise to the given half-lattice modes.
    pub fn with_mask(mut self, modes: &[WaveVector]) -> Result<Self> {
        let keep: HashSet<_> = modes.iter().copied().collect();
        for k in &keep {
            if !k.is_positive_half() || k.max_abs() > self.cutoff as i64 {
                return Err(Error::Invalid(format!(
                    "mask mode ({}, {}) is not a half-lattice mode within cutoff {}",
                    k.k1, k.k2, self.cutoff
                )));
            }
        }
        self.modes.retain(|k| keep.contains(k));
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
    /// Retained half-lattice modes, in path order.
    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    /// `amplitude |k|^(-b)`.
    pub fn mode_weight(&self, k: WaveVector) -> f64 {
        self.amplitude * k.norm().powf(-self.b)
    }

    /// Factor turning a Brownian increment into the exact OU increment:
    /// `sqrt((1 - exp(-2 lambda dt)) / (2 lambda dt))`.
    pub fn ou_factor(&self, k: WaveVector) -> f64 {
        let x = 2.0 * k.norm_sq() as f64 * self.dt;
        (-(-x).exp_m1() / x).sqrt()
    }
}

/// Brownian increments `(dB_cos, dB_sin)` for every retained mode and step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    modes: Vec<WaveVector>,
    steps: usize,
    increments: Vec<[f64; 2]>,
}

impl NoisePath {
    /// Draws the path from the counter-based streams of `spec`.
    pub fn generate(spec: &NoiseSpec) -> Self {
        let nm = spec.modes.len();
        let mut increments = vec![[0.0; 2]; nm * spec.steps];
        let sd = spec.dt.sqrt();
        for (j, k) in spec.modes.iter().enumerate() {
            let mut stream = ModeStream::new(spec.seed, k.k1, k.k2);
            for m in 0..spec.steps {
                let (a, b) = stream.normal_pair();
                increments[m * nm + j] = [a * sd, b * sd];
            }
        }
        Self {
            modes: spec.modes.clone(),
            steps: spec.steps,
            increments,
        }
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Increments of mode `j` at step `m`.
    pub fn get(&self, j: usize, m: usize) -> [f64; 2] {
        self.increments[m * self.modes.len() + j]
    }

    /// First `steps` steps of the path.
    pub fn truncated(&self, steps: usize) -> Self {
        let steps = steps.min(self.steps);
        Self {
            modes: self.modes.clone(),
            steps,
            increments: self.increments[..steps * self.modes.len()].to_vec(),
        }
    }

    /// Copy with increment `component` (0 = cos, 1 = sin) of mode `j` at step `m` shifted by `h`.
    pub fn bumped(&self, j: usize, component: usize, m: usize, h: f64) -> Self {
        let mut out = self.clone();
        out.increments[m * self.modes.len() + j][component] += h;
        out
    }

    /// Path on the mesh of step `2 dt` whose OU forcing equals two fine steps
    /// composed exactly, so both meshes see the same convolution at shared times.
    pub fn coarsen(&self, fine: &NoiseSpec) -> Result<(NoiseSpec, NoisePath)> {
        if self.steps % 2 != 0 {
            return Err(Error::Invalid("coarsening needs an even number of steps".into()));
        }
        let mut coarse = fine.clone();
        coarse.dt = 2.0 * fine.dt;
        coarse.steps = self.steps / 2;
        let nm = self.modes.len();
        let mut increments = vec![[0.0; 2]; nm * coarse.steps];
        for (j, &k) in self.modes.iter().enumerate() {
            let decay = (-(k.norm_sq() as f64) * fine.dt).exp();
            let ratio = fine.ou_factor(k) / coarse.ou_factor(k);
            for m in 0..coarse.steps {
                let (a, b) = (self.get(j, 2 * m), self.get(j, 2 * m + 1));
                for c in 0..2 {
                    increments[m * nm + j][c] = ratio * (decay * a[c] + b[c]);
                }
            }
        }
        Ok((
            coarse,
            NoisePath {
                modes: self.modes.clone(),
                steps: self.steps / 2,
                increments,
            },
        ))
    }

    /// Exact OU forcing `eta_m` on a field of the given cutoff.
    pub fn ou_increment(&self, spec: &NoiseSpec, m: usize, cutoff: usize) -> Result<SpectralField> {
        if spec.cutoff > cutoff {
            return Err(Error::Invalid(format!(
                "noise cutoff {} exceeds field cutoff {cutoff}",
                spec.cutoff
            )));
        }
        let mut eta = SpectralField::zeros(cutoff);
        if spec.amplitude == 0.0 {
            return Ok(eta);
        }
        for (j, &k) in self.modes.iter().enumerate() {
            let [c, s] = self.get(j, m);
            let w = spec.mode_weight(k) * spec.ou_factor(k) * FRAC_1_SQRT_2;
            eta.set_pair(k, Complex64::new(c * w, -s * w));
        }
        Ok(eta)
    }
}

/// Samples `z` on the time mesh `0, dt, ..., steps dt`.
pub fn sample_convolution(spec: &NoiseSpec) -> Result<Vec<SpectralField>> {
    convolution_path(spec, &NoisePath::generate(spec))
}

/// The convolution driven by a given path.
pub fn convolution_path(spec: &NoiseSpec, path: &NoisePath) -> Result<Vec<SpectralField>> {
    let mut z = SpectralField::zeros(spec.cutoff);
    let mut out = Vec::with_capacity(path.steps() + 1);
    out.push(z.clone());
    for m in 0..path.steps() {
        z = &semigroup_apply(spec.dt, &z)? + &path.ou_increment(spec, m, spec.cutoff)?;
        out.push(z.clone());
    }
    Ok(out)
}

/// Truncated trace of `(-Laplacian)^(-b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceReport {
    pub truncated: f64,
    /// Upper bound on the omitted tail; `None` when the series diverges.
    pub tail_bound: Option<f64>,
}

/// `sum |k|^(-2b)` over nonzero `|k_i| <= cutoff`, with a tail bound when `b > 1`.
pub fn trace_q(b: f64, cutoff: usize) -> TraceReport {
    let truncated = lattice_sum(cutoff, |l| l.powf(-b));
    let tail_bound = (b > 1.0).then(|| 8.0 * (cutoff as f64).powf(2.0 - 2.0 * b) / (2.0 * b - 2.0));
    TraceReport { truncated, tail_bound }
}

/// The full trace: an interval `[truncated, truncated + tail]`, or an error when `b <= 1`.
pub fn trace_q_untruncated(b: f64, cutoff: usize) -> Result<TraceReport> {
    if b <= 1.0 {
        return Err(Error::Divergent(format!(
            "sum |k|^(-2b) diverges for b = {b}; a trace-class covariance requires b > 1"
        )));
    }
    Ok(trace_q(b, cutoff))
}

/// `sum f(|k|^2)` over nonzero modes with `|k_i| <= cutoff`.
fn lattice_sum(cutoff: usize, f: impl Fn(f64) -> f64) -> f64 {
    let c = cutoff as i64;
    let mut s = 0.0;
    for k1 in -c..=c {
        for k2 in -c..=c {
            if k1 != 0 || k2 != 0 {
                s += f((k1 * k1 + k2 * k2) as f64);
            }
        }
    }
    s
}

/// Closed-form `Var z(t, x)` for noise truncated at `cutoff`; independent of `x`.
pub fn convolution_variance(b: f64, cutoff: usize, amplitude: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::constraint("t", t, "t >= 0", "convolution variance"));
    }
    let s = lattice_sum(cutoff, |l| l.powf(-b) * -(-2.0 * l * t).exp_m1() / (2.0 * l));
    Ok(amplitude * amplitude * s / (TAU * TAU))
}

/// `t`-uniform bound `sum |k|^(-2-2b) / (2 (2 pi)^2)` on the variance.
pub fn convolution_variance_bound(b: f64, cutoff: usize, amplitude: f64) -> f64 {
    amplitude * amplitude * lattice_sum(cutoff, |l| l.powf(-1.0 - b)) / (2.0 * TAU * TAU)
}

/// Spectral tail `sum_{max|k_i| > cutoff} |k|^(-2-2b)` bounded by an integral.
pub fn spectral_tail_bound(b: f64, cutoff: usize) -> f64 {
    8.0 * (cutoff.max(1) as f64).powf(-2.0 * b) / (2.0 * b)
}

/// `z(T, x)` for each of `samples` independent paths.
pub fn sample_point_values(spec: &NoiseSpec, samples: usize, x: [f64; 2]) -> Result<Vec<f64>> {
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = spec.clone().with_seed(derive_seed(spec.seed, i as u64));
            Ok(final_point_value(&s, &NoisePath::generate(&s), x))
        })
        .collect()
}

/// `z(T, x)` from the path without forming intermediate fields: each mode's
/// final coefficient is a Horner sum of its decayed increments.
fn final_point_value(spec: &NoiseSpec, path: &NoisePath, x: [f64; 2]) -> f64 {
    if spec.amplitude == 0.0 {
        return 0.0;
    }
    let mut value = 0.0;
    for (j, &k) in path.modes().iter().enumerate() {
        let decay = (-(k.norm_sq() as f64) * spec.dt).exp();
        let w = spec.mode_weight(k) * spec.ou_factor(k) * FRAC_1_SQRT_2;
        let (mut re, mut im) = (0.0, 0.0);
        for m in 0..path.steps() {
            let [c, s] = path.get(j, m);
            re = re * decay + c * w;
            im = im * decay - s * w;
        }
        let phase = k.k1 as f64 * x[0] + k.k2 as f64 * x[1];
        value += re * phase.cos() - im * phase.sin();
    }
    value / std::f64::consts::PI
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvolutionCheckRow {
    pub b: f64,
    pub t: f64,
    pub empirical_var: f64,
    pub closed_form: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Empirical vs closed-form variance of `z(t, x)`, passing within `n_se` standard errors.
pub fn convolution_check(
    b: f64,
    t: f64,
    cutoff: usize,
    steps: usize,
    samples: usize,
    seed: u64,
    x: [f64; 2],
    n_se: f64,
) -> Result<ConvolutionCheckRow> {
    let spec = NoiseSpec::new(b, cutoff, t / steps as f64, steps, seed)?;
    let values = sample_point_values(&spec, samples, x)?;
    let empirical_var = variance(&values);
    let closed_form = convolution_variance(b, cutoff, 1.0, t)?;
    let stderr = variance_stderr(closed_form, samples);
    Ok(ConvolutionCheckRow {
        b,
        t,
        empirical_var,
        closed_form,
        stderr,
        pass: (empirical_var - closed_form).abs() <= n_se * stderr,
    })
}

/// Monte Carlo summary of `sup_t ||z(t)||_p^p` and of path increments.
#[derive(Debug, Clone)]
pub struct PathStatistics {
    /// Estimate from the first half of the samples.
    pub estimate_half: f64,
    /// Estimate from all samples.
    pub estimate: f64,
    /// `max_{t, x} |z(t + h) - z(t)|` for `h = dt, 2 dt, 4 dt` (finest first), averaged over samples.
    pub max_increments: [f64; 3],
}

impl PathStatistics {
    /// Relative change of the estimate when the sample count doubles.
    pub fn doubling_change(&self) -> f64 {
        if self.estimate == 0.0 {
            0.0
        } else {
            (self.estimate - self.estimate_half).abs() / self.estimate
        }
    }
}

pub fn path_statistics(spec: &NoiseSpec, samples: usize, p: f64, n: usize) -> Result<PathStatistics> {
    if !(p > 2.0) {
        return Err(Error::constraint("p", p, "p > 2", "moment bound of the convolution"));
    }
    if samples < 2 {
        return Err(Error::constraint("samples", samples, "samples >= 2", "Monte Carlo estimate"));
    }
    let per: Vec<(f64, [f64; 3])> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, [f64; 3])> {
            let s = spec.clone().with_seed(derive_seed(spec.seed, i as u64));
            let grids = sample_convolution(&s)?
                .iter()
                .map(|z| to_grid(z, n))
                .collect::<Result<Vec<_>>>()?;
            let mut sup: f64 = 0.0;
            for g in &grids {
                sup = sup.max(lp_norm(g, p)?.powf(p));
            }
            let mut incr = [0.0; 3];
            for (slot, stride) in [1usize, 2, 4].into_iter().enumerate() {
                let mut m = 0usize;
                while m + stride < grids.len() {
                    let (a, b) = (grids[m].values(), grids[m + stride].values());
                    let d = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                    incr[slot] = f64::max(incr[slot], d);
                    m += stride;
                }
            }
            Ok((sup, incr))
        })
        .collect::<Result<_>>()?;
    let half = samples / 2;
    let avg = |xs: &[(f64, [f64; 3])]| xs.iter().map(|v| v.0).sum::<f64>() / xs.len() as f64;
    let mut max_increments = [0.0; 3];
    for (_, inc) in &per {
        for i in 0..3 {
            max_increments[i] += inc[i] / samples as f64;
        }
    }
    Ok(PathStatistics {
        estimate_half: avg(&per[..half]),
        estimate: avg(&per),
        max_increments,
    })
}
