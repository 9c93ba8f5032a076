//! Run configuration: a JSON document plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use permon_core::scenario::{Mode, Scenario};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub parameterization: Option<String>,
    pub params: Option<String>,
    #[serde(default)]
    pub init: Option<InitSection>,
    pub mode: Option<String>,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    pub grid: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitSection {
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_harmonics")]
    pub harmonics: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_population() -> usize {
    100
}
fn default_generations() -> usize {
    3000
}
fn default_harmonics() -> usize {
    5
}
fn default_delta() -> f64 {
    0.1
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            population: default_population(),
            generations: default_generations(),
            harmonics: default_harmonics(),
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSection {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub armijo: bool,
}

fn default_step() -> f64 {
    1e-3
}
fn default_eps() -> f64 {
    1e-4
}
fn default_max_iters() -> usize {
    4000
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            step: default_step(),
            eps: default_eps(),
            max_iters: default_max_iters(),
            armijo: false,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub scenario: Scenario,
    pub kind: ParamKind,
    pub params_path: Option<PathBuf>,
    pub init: InitSection,
    pub optimizer: OptimizerSection,
    /// RK4 steps per period (or per horizon in transient mode).
    pub grid_steps: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    OneD,
    Fourier,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub max_iters: Option<usize>,
    pub step: Option<f64>,
    pub eps: Option<f64>,
    pub mode: Option<String>,
    pub kind: Option<String>,
}

impl RunConfig {
    /// Load a config file (when given) and apply flag overrides. Relative
    /// paths inside the file resolve against the file's directory.
    pub fn resolve(config_path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let (file, base): (ConfigFile, PathBuf) = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let file: ConfigFile = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?;
                let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
                (file, base)
            }
            None => (ConfigFile::default(), PathBuf::from(".")),
        };

        let scenario_path = match (&overrides.scenario, &file.scenario) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base.join(p),
            (None, None) => bail!("config field `scenario`: no scenario file given"),
        };
        let mut scenario = Scenario::load(&scenario_path)
            .with_context(|| format!("loading scenario {}", scenario_path.display()))?;

        if let Some(mode) = overrides.mode.as_deref().or(file.mode.as_deref()) {
            scenario.mode = match mode {
                "steady" => Mode::Steady,
                "transient" => {
                    let horizon = scenario.horizon().or_else(|| match scenario.mode {
                        Mode::Transient { horizon } => Some(horizon),
                        Mode::Steady => None,
                    });
                    match horizon {
                        Some(h) => Mode::Transient { horizon: h },
                        None => bail!(
                            "config field `mode`: transient override needs a scenario horizon"
                        ),
                    }
                }
                other => bail!("config field `mode`: expected steady|transient, got {other:?}"),
            };
        }

        let kind_str = overrides
            .kind
            .clone()
            .or_else(|| file.parameterization.clone())
            .unwrap_or_else(|| if scenario.dim == 1 { "1d" } else { "fourier" }.to_string());
        let kind = match kind_str.as_str() {
            "1d" => ParamKind::OneD,
            "fourier" => ParamKind::Fourier,
            other => bail!("config field `parameterization`: expected 1d|fourier, got {other:?}"),
        };
        if kind == ParamKind::OneD && scenario.dim != 1 {
            bail!("config field `parameterization`: 1d parameterization requires a 1D scenario");
        }

        let params_path = overrides
            .params
            .clone()
            .or_else(|| file.params.as_ref().map(|p| base.join(p)));
        if let Some(p) = &params_path {
            if !p.exists() {
                bail!("config field `params`: file {} does not exist", p.display());
            }
        }

        let mut optimizer = file.optimizer.clone();
        if let Some(v) = overrides.step {
            optimizer.step = v;
        }
        if let Some(v) = overrides.eps {
            optimizer.eps = v;
        }
        if let Some(v) = overrides.max_iters {
            optimizer.max_iters = v;
        }

        Ok(RunConfig {
            scenario_path,
            scenario,
            kind,
            params_path,
            init: file.init.unwrap_or_default(),
            optimizer,
            grid_steps: overrides.grid.or(file.grid).unwrap_or(2000),
            seed: overrides.seed.or(file.seed).unwrap_or(0),
            out: overrides
                .out
                .clone()
                .or_else(|| file.out.as_ref().map(|p| base.join(p)))
                .unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}
