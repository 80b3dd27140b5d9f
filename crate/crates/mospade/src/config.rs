//! Declarative experiment configuration: a strict TOML schema with unknown
//! keys rejected, so typos fail loudly. Parse → serialize → parse is the
//! identity on the typed structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridDim;
use crate::source::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub scenario: ScenarioSection,
    pub psf: PsfSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub modes: ModesSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub adaptive: Option<AdaptiveSection>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_seed() -> u64 {
    20_240_101
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind")]
pub enum ScenarioSection {
    #[serde(rename = "five-points")]
    FivePoints {
        /// Point spacing in units of σ.
        dx: f64,
    },
    #[serde(rename = "uniform-1d")]
    Uniform1d {
        /// Half-extent of the source region, units of σ.
        extent: f64,
        /// Rectangle basis width, units of σ.
        a: f64,
    },
    #[serde(rename = "smooth-1d-a")]
    Smooth1dA {
        extent: f64,
        a: f64,
    },
    #[serde(rename = "smooth-1d-b")]
    Smooth1dB {
        extent: f64,
        a: f64,
    },
    #[serde(rename = "chirp-2d")]
    Chirp2d {
        bins: usize,
        bin_width: f64,
        contrast: f64,
    },
    #[serde(rename = "siemens-2d")]
    Siemens2d {
        bins: usize,
        bin_width: f64,
        contrast: f64,
        spokes: usize,
    },
}

impl ScenarioSection {
    pub fn to_scenario(&self) -> Scenario {
        match *self {
            ScenarioSection::FivePoints { dx } => Scenario::FivePoints { dx },
            ScenarioSection::Uniform1d { extent, a } => Scenario::Uniform1d { extent, a },
            ScenarioSection::Smooth1dA { extent, a } => Scenario::Smooth1dA { extent, a },
            ScenarioSection::Smooth1dB { extent, a } => Scenario::Smooth1dB { extent, a },
            ScenarioSection::Chirp2d { bins, bin_width, contrast } => Scenario::Chirp2d {
                bins,
                bin_width,
                contrast,
            },
            ScenarioSection::Siemens2d { bins, bin_width, contrast, spokes } => Scenario::Siemens2d {
                bins,
                bin_width,
                contrast,
                spokes,
            },
        }
    }

    pub fn dim(&self) -> GridDim {
        match self {
            ScenarioSection::Chirp2d { .. } | ScenarioSection::Siemens2d { .. } => GridDim::Two,
            _ => GridDim::One,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsfSection {
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Image-grid spacing in units of σ; default 0.1 (1D), 0.25 (2D).
    #[serde(default)]
    pub spacing: Option<f64>,
}

impl Default for GridSection {
    fn default() -> GridSection {
        GridSection { spacing: None }
    }
}

impl GridSection {
    pub fn spacing_for(&self, dim: GridDim) -> f64 {
        self.spacing.unwrap_or(match dim {
            GridDim::One => 0.1,
            GridDim::Two => 0.25,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    /// Number of optimized modes; default K+1 for the scenario.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub restarts: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
}

fn default_max_iters() -> usize {
    500
}

fn default_grad_tol() -> f64 {
    1e-6
}

impl Default for ModesSection {
    fn default() -> ModesSection {
        ModesSection {
            count: None,
            max_iters: default_max_iters(),
            restarts: 0,
            grad_tol: default_grad_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Which scenario parameter the values replace.
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Dx,
    A,
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSection {
    pub budget: f64,
    #[serde(default = "default_phases")]
    pub phases: usize,
    #[serde(default = "default_j_adapt")]
    pub j_adapt: usize,
    /// Poisson-variance row weighting in the stacked NNLS solves.
    #[serde(default)]
    pub weighted_nnls: bool,
}

fn default_phases() -> usize {
    3
}

fn default_j_adapt() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    pub budgets: Vec<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psf.sigma > 0.0) {
            return Err(Error::Config("psf.sigma must be > 0".into()));
        }
        if self.experiment.trials == 0 {
            return Err(Error::Config("experiment.trials must be ≥ 1".into()));
        }
        if let Some(s) = self.grid.spacing {
            if !(s > 0.0) {
                return Err(Error::Config("grid.spacing must be > 0".into()));
            }
        }
        match &self.scenario {
            ScenarioSection::FivePoints { dx } if !(*dx > 0.0) => {
                return Err(Error::Config("scenario.dx must be > 0".into()));
            }
            ScenarioSection::Uniform1d { extent, a }
            | ScenarioSection::Smooth1dA { extent, a }
            | ScenarioSection::Smooth1dB { extent, a }
                if !(*extent > 0.0 && *a > 0.0) =>
            {
                return Err(Error::Config("scenario extent and a must be > 0".into()));
            }
            ScenarioSection::Chirp2d { bins, bin_width, .. }
            | ScenarioSection::Siemens2d { bins, bin_width, .. }
                if *bins == 0 || !(*bin_width > 0.0) =>
            {
                return Err(Error::Config("scenario bins/bin_width invalid".into()));
            }
            _ => {}
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values must be non-empty".into()));
            }
            if sweep.values.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("sweep.values must be positive".into()));
            }
        }
        if let Some(ad) = &self.adaptive {
            if !(ad.budget > 0.0) || ad.phases == 0 || ad.j_adapt < 2 {
                return Err(Error::Config(
                    "adaptive budget/phases/j_adapt out of range".into(),
                ));
            }
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.budgets.iter().any(|&v| v < 0.0) {
                return Err(Error::Config("monte_carlo.budgets must be ≥ 0".into()));
            }
        }
        Ok(())
    }

    /// FNV-1a over the canonical serialization; stamped into CSV headers.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_toml().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}
