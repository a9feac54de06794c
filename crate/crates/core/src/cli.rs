//! Subcommand dispatch, artifact writing, and run manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::checks::{self, CheckResult};
use crate::config::RunConfig;
use crate::density::{continuity_diagnostics, ensemble, kde, DensityEstimate};
use crate::error::{Error, Result};
use crate::heat_kernel::kernel_estimate_sweep;
use crate::malliavin::{lower_bound_a, malliavin_ensemble, small_ball_probe};
use crate::noise::{convolution_check, NoisePath};
use crate::solver::{picard_solve, run};

pub const VERSION: &str = concat!("stochvort-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Simulate,
    KernelCheck,
    ConvolutionCheck,
    Picard,
    Malliavin,
    Density,
    AllChecks,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Self::Simulate,
        Self::KernelCheck,
        Self::ConvolutionCheck,
        Self::Picard,
        Self::Malliavin,
        Self::Density,
        Self::AllChecks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::KernelCheck => "kernel-check",
            Self::ConvolutionCheck => "convolution-check",
            Self::Picard => "picard",
            Self::Malliavin => "malliavin",
            Self::Density => "density",
            Self::AllChecks => "all-checks",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentManifest {
    pub version: String,
    pub subcommand: Subcommand,
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub config: RunConfig,
    pub output_dir: PathBuf,
    pub threads: usize,
    pub files: Vec<String>,
    pub pass: bool,
    pub started_at: String,
    pub finished_at: String,
    pub wall_seconds: f64,
}

/// What a subcommand produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub files: Vec<String>,
    pub checks: Vec<CheckResult>,
}

/// Payloads computed in parallel, written afterwards by a single writer.
enum Artifact {
    Csv(String, Vec<u8>),
    Json(String, Vec<u8>),
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs `sub` on `cfg` inside a pool of `threads` workers (all cores when `None`)
/// and writes the artifacts plus `manifest.json` into `out`.
pub fn dispatch(
    sub: Subcommand,
    cfg: &RunConfig,
    config_path: Option<&Path>,
    out: &Path,
    threads: Option<usize>,
) -> Result<Outcome> {
    cfg.validate_for(sub.name())?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();
    let (pass, artifacts, checks) = pool.install(|| compute(sub, cfg))?;

    fs::create_dir_all(out)?;
    let mut files = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let (name, bytes) = match a {
            Artifact::Csv(n, b) | Artifact::Json(n, b) => (n, b),
        };
        fs::write(out.join(&name), bytes)?;
        files.push(name);
    }
    let manifest = ExperimentManifest {
        version: VERSION.to_owned(),
        subcommand: sub,
        config_path: config_path.map(Path::to_path_buf),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        output_dir: out.to_path_buf(),
        threads: workers,
        files: files.clone(),
        pass,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(Outcome { pass, files, checks })
}

#[derive(Serialize)]
struct NormRow {
    t: f64,
    l2: f64,
    lp: f64,
    sigma_hit_flag: u8,
}

#[derive(Serialize)]
struct PicardRow {
    iteration: usize,
    difference: f64,
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct MalliavinRow {
    sample_id: usize,
    t: f64,
    x1: f64,
    x2: f64,
    norm_sq: f64,
    a_eps: f64,
    lower_bound: Option<f64>,
    i_split: f64,
}

#[derive(Serialize)]
struct SmallBallRow {
    delta: f64,
    frequency: f64,
}

#[derive(Serialize)]
struct SampleRow {
    sample_id: usize,
    value: f64,
}

#[derive(Serialize)]
struct KdeRow {
    x: f64,
    density: f64,
}

#[derive(Serialize)]
struct DensityDiagnostics {
    /// The three diagnostics are empirical proxies for absolute continuity, not proofs.
    note: &'static str,
    samples: usize,
    config_hash: String,
    t: f64,
    x: [f64; 2],
    atom: Option<(f64, usize)>,
    diagnostics: Option<crate::density::ContinuityReport>,
}

fn compute(sub: Subcommand, cfg: &RunConfig) -> Result<(bool, Vec<Artifact>, Vec<CheckResult>)> {
    let mut out = Vec::new();
    let pass = match sub {
        Subcommand::Simulate => {
            let sim = cfg.simulation()?;
            let traj = run(&sim)?;
            let hit = traj.sigma_hit.map(|(m, _)| m);
            let rows: Vec<NormRow> = traj
                .states
                .iter()
                .enumerate()
                .map(|(m, s)| NormRow {
                    t: traj.times[m],
                    l2: s.energy().sqrt(),
                    lp: traj.lp_norms[m],
                    sigma_hit_flag: u8::from(hit.is_some_and(|h| m >= h)),
                })
                .collect();
            out.push(Artifact::Csv("norms.csv".into(), csv_bytes(&rows)?));
            if let Some(every) = cfg.snapshot_every.filter(|&e| e > 0) {
                for (m, s) in traj.states.iter().enumerate().step_by(every) {
                    let mut buf = Vec::new();
                    s.write_csv(&mut buf)?;
                    out.push(Artifact::Csv(format!("snapshot_{m:06}.csv"), buf));
                }
            }
            true
        }
        Subcommand::KernelCheck => {
            let xs = [[0.5, 0.5], [2.0, 5.0], [4.5, 1.0]];
            let mut rows = Vec::new();
            let mut pass = true;
            for (gradient, betas) in [(true, [1.0, 1.2]), (false, [1.0, 1.5])] {
                for beta in betas {
                    let fit = kernel_estimate_sweep(
                        beta,
                        gradient,
                        checks::KERNEL_S_RANGE.0,
                        checks::KERNEL_S_RANGE.1,
                        checks::KERNEL_S_POINTS,
                        &xs,
                        checks::KERNEL_SLOPE_TOL,
                    )?;
                    pass &= fit.rows.iter().all(|r| r.pass) && fit.x_spread < checks::KERNEL_X_TOL;
                    rows.extend(fit.rows);
                }
            }
            out.push(Artifact::Csv("kernel_check.csv".into(), csv_bytes(&rows)?));
            pass
        }
        Subcommand::ConvolutionCheck => {
            let steps = cfg.steps()?;
            let probe = cfg.probe_step()?;
            let mut rows = Vec::new();
            for (m, seed) in [(probe, cfg.seed), (steps, cfg.seed.wrapping_add(1))] {
                if rows.iter().any(|r: &crate::noise::ConvolutionCheckRow| r.t == m as f64 * cfg.dt) {
                    continue;
                }
                rows.push(convolution_check(
                    cfg.b,
                    m as f64 * cfg.dt,
                    cfg.noise_cutoff.unwrap_or(cfg.cutoff),
                    m,
                    cfg.samples,
                    seed,
                    cfg.probe_x,
                    checks::CONVOLUTION_N_SE,
                )?);
            }
            let pass = rows.iter().all(|r| r.pass);
            out.push(Artifact::Csv("convolution_check.csv".into(), csv_bytes(&rows)?));
            pass
        }
        Subcommand::Picard => {
            let sim = cfg.simulation()?;
            let path = NoisePath::generate(sim.noise());
            let result = picard_solve(&sim, &path, cfg.picard_tol, cfg.picard_max_iter)?;
            let ratios = result.ratios();
            let rows: Vec<PicardRow> = result
                .history
                .iter()
                .enumerate()
                .map(|(i, &d)| PicardRow {
                    iteration: i + 1,
                    difference: d,
                    ratio: i.checked_sub(1).map(|j| ratios[j]),
                })
                .collect();
            out.push(Artifact::Csv("picard.csv".into(), csv_bytes(&rows)?));
            checks::is_geometric(&ratios, checks::PICARD_GEOMETRIC_TOL)
        }
        Subcommand::Malliavin => {
            let sim = cfg.simulation()?;
            let step = cfg.probe_step()?;
            let window = ((cfg.eps / cfg.dt).round() as usize).clamp(1, step);
            let eps = window as f64 * cfg.dt;
            let t = step as f64 * cfg.dt;
            let samples = malliavin_ensemble(&sim, cfg.samples, cfg.seed, step, window, cfg.probe_x)?;
            let bound = if eps < t {
                lower_bound_a(cfg.b, sim.noise().cutoff(), cfg.noise_amplitude, eps, t, cfg.horizon)
                    .ok()
                    .map(|(_, lb)| lb)
            } else {
                None
            };
            let rows: Vec<MalliavinRow> = samples
                .iter()
                .map(|s| MalliavinRow {
                    sample_id: s.sample,
                    t,
                    x1: cfg.probe_x[0],
                    x2: cfg.probe_x[1],
                    norm_sq: s.norm_sq,
                    a_eps: s.window.1,
                    lower_bound: bound,
                    i_split: s.window.2,
                })
                .collect();
            let norms: Vec<f64> = samples.iter().map(|s| s.norm_sq).collect();
            let ball = small_ball_probe(&norms, &cfg.delta)?;
            let ball_rows: Vec<SmallBallRow> = ball
                .deltas
                .iter()
                .zip(&ball.frequencies)
                .map(|(&delta, &frequency)| SmallBallRow { delta, frequency })
                .collect();
            out.push(Artifact::Csv("malliavin.csv".into(), csv_bytes(&rows)?));
            out.push(Artifact::Csv("small_ball.csv".into(), csv_bytes(&ball_rows)?));
            samples
                .iter()
                .all(|s| s.norm_sq > 0.0 && s.window.0 >= 0.5 * s.window.1 - s.window.2)
        }
        Subcommand::Density => {
            let sim = cfg.simulation()?;
            let step = cfg.probe_step()?;
            let res = ensemble(&sim, step, cfg.probe_x, cfg.samples, cfg.seed, &cfg.hash())?;
            let rows: Vec<SampleRow> = res
                .values
                .iter()
                .enumerate()
                .map(|(sample_id, &value)| SampleRow { sample_id, value })
                .collect();
            out.push(Artifact::Csv("samples.csv".into(), csv_bytes(&rows)?));
            let mut atom = None;
            if res.values.len() >= 100 {
                match kde(&res.values, None)? {
                    DensityEstimate::Curve { xs, density, .. } => {
                        let rows: Vec<KdeRow> = xs.iter().zip(&density).map(|(&x, &d)| KdeRow { x, density: d }).collect();
                        out.push(Artifact::Csv("kde.csv".into(), csv_bytes(&rows)?));
                    }
                    DensityEstimate::Atom { value, multiplicity } => atom = Some((value, multiplicity)),
                }
            }
            let diagnostics = if res.values.len() >= 1000 {
                Some(continuity_diagnostics(&res.values)?)
            } else {
                None
            };
            let pass = atom.is_none() && diagnostics.as_ref().map_or(true, |d| d.pass);
            let report = DensityDiagnostics {
                note: "atom, split-half KS and local-mass tests are empirical proxies, not proofs",
                samples: res.samples,
                config_hash: res.config_hash,
                t: res.t,
                x: res.x,
                atom,
                diagnostics,
            };
            out.push(Artifact::Json("diagnostics.json".into(), serde_json::to_vec_pretty(&report)?));
            pass
        }
        Subcommand::AllChecks => {
            let results = checks::run_all();
            out.push(Artifact::Csv("summary.csv".into(), csv_bytes(&results)?));
            let pass = results.iter().all(|r| r.pass);
            return Ok((pass, out, results));
        }
    };
    Ok((pass, out, Vec::new()))
}
