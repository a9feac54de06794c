//! Run configuration: flat JSON keys, environment overrides, validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::biot_savart::TruncationSpec;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::solver::{InitialCondition, Simulation};

/// Prefix of environment variables that override config keys, e.g. `SNS_SEED=7`.
pub const ENV_PREFIX: &str = "SNS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    SinX1,
    SinX1Cos2x2,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub b: f64,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "defaults::cutoff")]
    pub cutoff: usize,
    #[serde(default = "defaults::grid")]
    pub grid: usize,
    #[serde(default = "defaults::p")]
    pub p: f64,
    #[serde(default = "defaults::truncation_level")]
    pub truncation_level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::one")]
    pub noise_amplitude: f64,
    /// Largest `|k|_inf` driven by noise; defaults to `cutoff`.
    #[serde(default)]
    pub noise_cutoff: Option<usize>,
    #[serde(default = "defaults::yes")]
    pub nonlinear: bool,
    #[serde(default = "defaults::ic")]
    pub ic: InitialKind,
    #[serde(default = "defaults::one")]
    pub ic_amplitude: f64,
    #[serde(default = "defaults::ic_band")]
    pub ic_band: usize,
    #[serde(default)]
    pub ic_seed: u64,
    /// Probe time; defaults to `horizon / 2`.
    #[serde(default)]
    pub probe_t: Option<f64>,
    #[serde(default = "defaults::probe_x")]
    pub probe_x: [f64; 2],
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    /// Malliavin window length.
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    /// Small-ball thresholds for `||D xi||^2`.
    #[serde(default = "defaults::delta")]
    pub delta: Vec<f64>,
    /// A priori constant; fitted on the ensemble when absent.
    #[serde(default)]
    pub cp_constant: Option<f64>,
    #[serde(default = "defaults::picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "defaults::picard_max_iter")]
    pub picard_max_iter: usize,
    /// Write a spectral snapshot every this many steps (`simulate`).
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

mod defaults {
    pub fn cutoff() -> usize {
        21
    }
    pub fn grid() -> usize {
        64
    }
    pub fn p() -> f64 {
        6.0
    }
    pub fn truncation_level() -> f64 {
        1e6
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn yes() -> bool {
        true
    }
    pub fn ic() -> super::InitialKind {
        super::InitialKind::Zero
    }
    pub fn ic_band() -> usize {
        4
    }
    pub fn probe_x() -> [f64; 2] {
        [std::f64::consts::PI; 2]
    }
    pub fn samples() -> usize {
        1000
    }
    pub fn eps() -> f64 {
        0.01
    }
    pub fn delta() -> Vec<f64> {
        vec![1e-4, 1e-3, 1e-2]
    }
    pub fn picard_tol() -> f64 {
        1e-12
    }
    pub fn picard_max_iter() -> usize {
        60
    }
}

impl RunConfig {
    /// Parses `text` as JSON, applies `env` overrides, and validates.
    pub fn from_json_with_env<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map: Map<String, Value> = match serde_json::from_str(text)? {
            Value::Object(m) => m,
            _ => return Err(Error::Config("top-level value must be a JSON object".into())),
        };
        for (key, raw) in env {
            if let Some(name) = key.strip_prefix(ENV_PREFIX) {
                let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
                map.insert(name.to_ascii_lowercase(), value);
            }
        }
        let cfg: RunConfig = serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_with_env(text, std::iter::empty())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::constraint("dt", self.dt, "dt > 0", "time step"));
        }
        if !(self.horizon >= self.dt) {
            return Err(Error::constraint("horizon", self.horizon, "horizon >= dt", "at least one step"));
        }
        if let Some(t) = self.probe_t {
            if !(t > 0.0 && t <= self.horizon) {
                return Err(Error::constraint("probe_t", t, "0 < probe_t <= horizon", "probe inside the run"));
            }
        }
        if self.samples < 2 {
            return Err(Error::constraint("samples", self.samples, "samples >= 2", "ensemble size"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::constraint("eps", self.eps, "eps > 0", "Malliavin window"));
        }
        self.simulation()?;
        Ok(())
    }

    /// Extra constraints of individual subcommands.
    pub fn validate_for(&self, subcommand: &str) -> Result<()> {
        if subcommand == "malliavin" && !(self.p > 4.0) {
            return Err(Error::constraint(
                "p",
                self.p,
                "p > 4",
                "the solution is Malliavin differentiable in D^{1,p} only for p > 4",
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> Result<usize> {
        Simulation::steps_for(self.horizon, self.dt)
    }

    /// Mesh step nearest the probe time.
    pub fn probe_step(&self) -> Result<usize> {
        let t = self.probe_t.unwrap_or(self.horizon / 2.0);
        Ok(((t / self.dt).round() as usize).clamp(1, self.steps()?))
    }

    pub fn initial_condition(&self) -> InitialCondition {
        let amplitude = self.ic_amplitude;
        match self.ic {
            InitialKind::Zero => InitialCondition::Zero,
            InitialKind::SinX1 => InitialCondition::SinX1 { amplitude },
            InitialKind::SinX1Cos2x2 => InitialCondition::SinX1Cos2X2 { amplitude },
            InitialKind::Random => InitialCondition::Random {
                amplitude,
                band: self.ic_band,
                seed: self.ic_seed,
            },
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        let noise = NoiseSpec::new(
            self.b,
            self.noise_cutoff.unwrap_or(self.cutoff),
            self.dt,
            self.steps()?,
            self.seed,
        )?
        .with_amplitude(self.noise_amplitude)?;
        let truncation = TruncationSpec::new(self.truncation_level, self.p)?;
        Simulation::new(self.cutoff, self.grid, truncation, noise, &self.initial_condition(), self.nonlinear)
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads and validates a config file, with `SNS_*` overrides from the process environment.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json_with_env(&text, std::env::vars())
}
