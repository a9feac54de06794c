//! Monte Carlo law of `xi(t, x)`: ensembles, kernel density estimates, and
//! empirical proxies for absolute continuity.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::rng::{derive_seed, mix64};
use crate::solver::{run_with_noise, Simulation};
use crate::stats::{ks_two_sample, mean, variance, KS_CRIT_001};

/// Samples of `xi(t, x)` over independent seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub values: Vec<f64>,
    pub config_hash: String,
    pub t: f64,
    pub x: [f64; 2],
    pub samples: usize,
}

/// Runs `samples` independent paths up to mesh step `step` and records the
/// point value there. Sample `i` uses seed `derive_seed(seed, i)`.
pub fn ensemble(
    sim: &Simulation,
    step: usize,
    x: [f64; 2],
    samples: usize,
    seed: u64,
    config_hash: &str,
) -> Result<EnsembleResult> {
    if samples < 2 {
        return Err(Error::Invalid(format!("ensemble needs at least 2 samples, got {samples}")));
    }
    if step > sim.steps() {
        return Err(Error::Invalid(format!("probe step {step} beyond horizon ({} steps)", sim.steps())));
    }
    let values = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = sim.with_seed(derive_seed(seed, i as u64));
            let path = NoisePath::generate(s.noise()).truncated(step);
            let v = run_with_noise(&s, &path)
                .map(|traj| traj.final_state().eval_at(x))
                .map_err(|e| Error::Sample {
                    sample: i,
                    source: Box::new(e),
                })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Sample {
                    sample: i,
                    source: Box::new(Error::NonFinite { what: "ensemble value" }),
                })
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EnsembleResult {
        values,
        config_hash: config_hash.to_owned(),
        t: step as f64 * sim.dt(),
        x,
        samples,
    })
}

pub const KDE_POINTS: usize = 512;

/// Density estimate, or the atom found when the sample has no spread.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DensityEstimate {
    Curve { xs: Vec<f64>, density: Vec<f64>, bandwidth: f64 },
    Atom { value: f64, multiplicity: usize },
}

/// Gaussian KDE on a 512-point grid over `[min - 3h, max + 3h]`, renormalized
/// to unit trapezoid mass. Default bandwidth is Silverman's `1.06 sd n^(-1/5)`.
pub fn kde(values: &[f64], bandwidth: Option<f64>) -> Result<DensityEstimate> {
    let n = values.len();
    if n < 100 {
        return Err(Error::Invalid(format!("kde needs at least 100 samples, got {n}")));
    }
    let sd = variance(values).sqrt();
    if !(sd > 0.0) {
        return Ok(DensityEstimate::Atom {
            value: values[0],
            multiplicity: n,
        });
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::constraint("bandwidth", h, "bandwidth > 0", "kernel width")),
        None => 1.06 * sd * (n as f64).powf(-0.2),
    };
    // Sorting makes the sums independent of arrival order.
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0] - 3.0 * h, sorted[n - 1] + 3.0 * h);
    let dx = (hi - lo) / (KDE_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..KDE_POINTS).map(|i| lo + i as f64 * dx).collect();
    let norm = 1.0 / (n as f64 * h * (2.0 * PI).sqrt());
    let mut density: Vec<f64> = xs
        .par_iter()
        .map(|&x| sorted.iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect();
    let mass = trapezoid(&density, dx);
    density.iter_mut().for_each(|d| *d /= mass);
    Ok(DensityEstimate::Curve {
        xs,
        density,
        bandwidth: h,
    })
}

/// Trapezoid integral of uniformly spaced samples.
pub fn trapezoid(y: &[f64], dx: f64) -> f64 {
    match y {
        [] | [_] => 0.0,
        [first, .., last] => dx * (y.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMassRow {
    pub h: f64,
    /// `max_c P(|xi - c| < h) / 2h` over centers at the sample values.
    pub max_density: f64,
}

/// Empirical proxies for absolute continuity. None of them is a proof.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityReport {
    pub samples: usize,
    pub atom_max_multiplicity: usize,
    pub atom_pass: bool,
    pub ks_stat: f64,
    pub ks_threshold: f64,
    pub ks_pass: bool,
    pub local_mass_table: Vec<LocalMassRow>,
    pub local_mass_pass: bool,
    pub pass: bool,
}

/// Largest tie count tolerated by the atom test; distinct continuous draws
/// in `f64` essentially never coincide.
pub const ATOM_MAX_TIES: usize = 2;
/// Bound on the ratio of local-mass densities between successive halvings of `h`.
pub const LOCAL_MASS_RATIO: f64 = 1.5;
pub const LOCAL_MASS_LEVELS: usize = 4;

pub fn continuity_diagnostics(values: &[f64]) -> Result<ContinuityReport> {
    let n = values.len();
    if n < 1000 {
        return Err(Error::Invalid(format!("continuity diagnostics need at least 1000 samples, got {n}")));
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for v in values {
        *counts.entry(v.to_bits()).or_default() += 1;
    }
    let atom_max_multiplicity = counts.values().copied().max().unwrap_or(0);

    // Halves keyed by the value bits, so the split ignores sample order.
    let (a, b): (Vec<f64>, Vec<f64>) = values.iter().partition(|v| mix64(v.to_bits()) & 1 == 0);
    let (ks_stat, ks_threshold) = if a.is_empty() || b.is_empty() {
        (1.0, 0.0)
    } else {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        (ks_two_sample(&a, &b), KS_CRIT_001 * ((na + nb) / (na * nb)).sqrt())
    };

    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = variance(&sorted).sqrt();
    let levels = if sd > 0.0 { LOCAL_MASS_LEVELS } else { 0 };
    let local_mass_table: Vec<LocalMassRow> = (0..levels)
        .map(|j| {
            let h = sd * 0.2 * 0.5f64.powi(j as i32);
            LocalMassRow {
                h,
                max_density: max_window_count(&sorted, h) as f64 / (n as f64 * 2.0 * h),
            }
        })
        .collect();
    let local_mass_pass = sd > 0.0
        && local_mass_table
            .windows(2)
            .all(|w| w[1].max_density <= LOCAL_MASS_RATIO * w[0].max_density);

    let atom_pass = atom_max_multiplicity <= ATOM_MAX_TIES;
    let ks_pass = ks_stat < ks_threshold;
    Ok(ContinuityReport {
        samples: n,
        atom_max_multiplicity,
        atom_pass,
        ks_stat,
        ks_threshold,
        ks_pass,
        local_mass_table,
        local_mass_pass,
        pass: atom_pass && ks_pass && local_mass_pass,
    })
}

/// Largest number of sorted values strictly within `h` of some value.
fn max_window_count(sorted: &[f64], h: f64) -> usize {
    let (mut lo, mut hi, mut best) = (0, 0, 0);
    for &c in sorted {
        while sorted[lo] <= c - h {
            lo += 1;
        }
        while hi < sorted.len() && sorted[hi] < c + h {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    best
}

/// Sample mean with its standard error.
pub fn mean_with_stderr(values: &[f64]) -> (f64, f64) {
    (mean(values), (variance(values) / values.len() as f64).sqrt())
}
