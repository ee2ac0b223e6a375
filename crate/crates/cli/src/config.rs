//! TOML pipeline configuration with CLI-flag overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wbslr_core::cohort::CohortSpec;
use wbslr_core::ensemble::WbSlrConfig;
use wbslr_core::featurize::WindowGrid;
use wbslr_core::seqmine::MinerConfig;
use wbslr_core::sgl::SglConfig;
use wbslr_core::synth::{GeneratorConfig, PlantedEffect};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    Slr,
    Wbslr,
    BaggedSlr,
    Afv,
    Atv,
    Bps,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Representation::Slr => "slr",
            Representation::Wbslr => "wbslr",
            Representation::BaggedSlr => "bagged-slr",
            Representation::Afv => "afv",
            Representation::Atv => "atv",
            Representation::Bps => "bps",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub events: Option<PathBuf>,
    pub labeled: Option<PathBuf>,
    pub grouping: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSection {
    pub observation_months: u32,
    pub holdoff_months: u32,
    pub monitor_months: u32,
    pub min_lead_months: u32,
    pub index_codes: BTreeSet<String>,
    pub outcome_codes: BTreeSet<String>,
}

impl Default for CohortSection {
    fn default() -> Self {
        CohortSection {
            observation_months: 12,
            holdoff_months: 6,
            monitor_months: 12,
            min_lead_months: 18,
            index_codes: BTreeSet::new(),
            outcome_codes: BTreeSet::new(),
        }
    }
}

impl CohortSection {
    pub fn to_spec(&self) -> CohortSpec {
        CohortSpec {
            observation_months: self.observation_months,
            holdoff_months: self.holdoff_months,
            monitor_months: self.monitor_months,
            min_lead_months: self.min_lead_months,
            index_codes: self.index_codes.clone(),
            outcome_codes: self.outcome_codes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub t_windows: Option<usize>,
    pub window_days: Option<u32>,
}

impl GridSection {
    /// Explicit values win; otherwise synthetic data keeps its generator
    /// grid, and file-based data falls back to 6 windows of 60 days.
    pub fn resolve(&self, synth_default: Option<(usize, u32)>) -> Result<WindowGrid, CliError> {
        let (dt, dw) = synth_default.unwrap_or((6, 60));
        WindowGrid::new(self.t_windows.unwrap_or(dt), self.window_days.unwrap_or(dw))
            .map_err(CliError::from)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SglSection {
    pub alpha: f64,
    pub lambda: f64,
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub fit_intercept: bool,
    /// Optional tuning grids; when both are non-empty, (alpha, lambda) is
    /// selected on the validation split by AUC.
    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
}

impl Default for SglSection {
    fn default() -> Self {
        SglSection {
            alpha: 0.7,
            lambda: 0.0005,
            tol: 1e-8,
            max_outer: 1000,
            max_inner: 100,
            fit_intercept: false,
            alpha_grid: vec![],
            lambda_grid: vec![],
        }
    }
}

impl SglSection {
    pub fn to_config(&self) -> SglConfig<f64> {
        SglConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            tol: self.tol,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            fit_intercept: self.fit_intercept,
        }
    }

    pub fn tuning_grid(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.alpha_grid.is_empty() || self.lambda_grid.is_empty() {
            None
        } else {
            Some((self.alpha_grid.clone(), self.lambda_grid.clone()))
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub b_count: usize,
    pub seed: u64,
    pub refit: bool,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            b_count: 20,
            seed: 42,
            refit: false,
        }
    }
}

impl EnsembleSection {
    pub fn to_config(self) -> WbSlrConfig {
        WbSlrConfig {
            b_count: self.b_count,
            seed: self.seed,
            refit: self.refit,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerSection {
    pub min_support: f64,
    pub max_length: usize,
}

impl Default for MinerSection {
    fn default() -> Self {
        let d = MinerConfig::default();
        MinerSection {
            min_support: d.min_support,
            max_length: d.max_length,
        }
    }
}

impl MinerSection {
    pub fn to_config(self) -> MinerConfig {
        MinerConfig {
            min_support: self.min_support,
            max_length: self.max_length,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub repeats: usize,
    pub threshold: f64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub base_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            repeats: 50,
            threshold: 0.5,
            train_fraction: 0.6,
            valid_fraction: 0.2,
            test_fraction: 0.2,
            base_seed: 1,
        }
    }
}

impl EvalSection {
    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train_fraction, self.valid_fraction, self.test_fraction)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_patients: usize,
    pub t_windows: usize,
    pub p_events: usize,
    pub window_days: u32,
    pub base_rate: f64,
    pub visit_rate: f64,
    pub bias: f64,
    pub seed: u64,
    pub planted: Vec<PlantedEffect<f64>>,
    pub planted_rate: Option<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_patients: 2000,
            t_windows: 6,
            p_events: 50,
            window_days: 60,
            base_rate: 0.05,
            visit_rate: 2.0,
            bias: 0.0,
            seed: 7,
            planted: vec![],
            planted_rate: None,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self) -> GeneratorConfig<f64> {
        GeneratorConfig {
            n_patients: self.n_patients,
            t_windows: self.t_windows,
            p_events: self.p_events,
            window_days: self.window_days,
            planted: self.planted.clone(),
            base_rate: self.base_rate,
            visit_rate: self.visit_rate,
            bias: self.bias,
            seed: self.seed,
            planted_rate: self.planted_rate,
        }
    }
}

/// The full resolved configuration; every section has defaults so a minimal
/// TOML file (or none at all) is valid until a command needs a missing path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub representation: Option<Representation>,
    pub paths: Paths,
    pub cohort: CohortSection,
    pub grid: GridSection,
    pub sgl: SglSection,
    pub ensemble: EnsembleSection,
    pub miner: MinerSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn representation(&self) -> Representation {
        self.representation.unwrap_or(Representation::Slr)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}
