//! The TOML run configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use piston_core::microsim::{Region, SlowState};
use piston_core::{ContainerSpec, ExperimentConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// File layout as written by the user. Exactly one of `container` (a path to
/// a geometry file, relative to the config) and `[geometry]` must be given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    container: Option<PathBuf>,
    geometry: Option<ContainerSpec>,
    #[serde(default)]
    seed: u64,
    initial: Option<SlowState>,
    region: Option<Region>,
    #[serde(default)]
    simulate: SimulateSection,
    #[serde(default)]
    average: AverageSection,
    #[serde(default)]
    converge: ConvergeSection,
    #[serde(default)]
    billiard: BilliardSection,
}

/// Resolved configuration; its canonical JSON form is what gets hashed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub geometry: ContainerSpec,
    pub seed: u64,
    pub initial: Option<SlowState>,
    pub region: Option<Region>,
    pub simulate: SimulateSection,
    pub average: AverageSection,
    pub converge: ConvergeSection,
    pub billiard: BilliardSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub eps: f64,
    pub horizon: f64,
    pub grid_step: f64,
    pub c1: Option<f64>,
    pub max_events: Option<usize>,
    pub halt_on_tilde: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { eps: 0.05, horizon: 1.0, grid_step: 1e-3, c1: None, max_events: None, halt_on_tilde: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AverageSection {
    pub horizon: f64,
    pub grid_step: f64,
}

impl Default for AverageSection {
    fn default() -> Self {
        AverageSection { horizon: 10.0, grid_step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeSection {
    pub horizon: f64,
    pub deltas: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub samples: usize,
    pub grid_step: f64,
    pub c1: Option<f64>,
}

impl Default for ConvergeSection {
    fn default() -> Self {
        let d = ExperimentConfig::default_experiment();
        ConvergeSection {
            horizon: d.horizon,
            deltas: d.deltas,
            eps_grid: d.eps_grid,
            samples: d.samples,
            grid_step: d.grid_step,
            c1: d.c1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilliardSection {
    pub side: u8,
    /// Frozen piston position; defaults to `initial.q`, else 0.5.
    pub q: Option<f64>,
    pub energy: f64,
    pub samples: usize,
    pub flux_horizon: f64,
    pub flux_orbits: usize,
    pub involution_samples: usize,
    pub ks_samples: usize,
    pub diagnostic_samples: usize,
    pub gammas: Vec<f64>,
}

impl Default for BilliardSection {
    fn default() -> Self {
        BilliardSection {
            side: 1,
            q: None,
            energy: 0.5,
            samples: 100_000,
            flux_horizon: 1e4,
            flux_orbits: 8,
            involution_samples: 10_000,
            ks_samples: 100_000,
            diagnostic_samples: 10_000,
            gammas: vec![0.1, 0.01],
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let geometry = match (raw.container, raw.geometry) {
            (Some(file), None) => {
                let file = path.parent().unwrap_or(Path::new(".")).join(file);
                let text = fs::read_to_string(&file).map_err(|e| {
                    CliError::Config(format!("cannot read container file {}: {e}", file.display()))
                })?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?
            }
            (None, Some(spec)) => spec,
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either `container` or `[geometry]`, not both".into()))
            }
            (None, None) => return Err(CliError::Config("missing `container` or `[geometry]`".into())),
        };
        Ok(Config {
            geometry,
            seed: raw.seed,
            initial: raw.initial,
            region: raw.region,
            simulate: raw.simulate,
            average: raw.average,
            converge: raw.converge,
            billiard: raw.billiard,
        })
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn initial(&self) -> Result<&SlowState, CliError> {
        self.initial.as_ref().ok_or_else(|| CliError::Config("missing [initial] section".into()))
    }

    pub fn region(&self) -> Result<&Region, CliError> {
        self.region.as_ref().ok_or_else(|| CliError::Config("missing [region] section".into()))
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let c = &self.converge;
        Ok(ExperimentConfig {
            container: self.geometry.clone(),
            initial: self.initial()?.clone(),
            region: *self.region()?,
            horizon: c.horizon,
            deltas: c.deltas.clone(),
            eps_grid: c.eps_grid.clone(),
            samples: c.samples,
            seed: self.seed,
            grid_step: c.grid_step,
            c1: c.c1,
        })
    }
}
