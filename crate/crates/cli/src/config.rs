//! Run configuration: `key = value` pairs inside `[sections]`, plus
//! `section.key=value` overrides from the command line.

use std::path::PathBuf;

use mblflow_core::diagrams::ScaleLadder;
use mblflow_core::flow::{FlowMode, FlowParams, LengthProxy};
use mblflow_core::liom::Direction;
use mblflow_core::model::{Ensemble, ModelParams};
use mblflow_core::oracle::DEFAULT_DENSE_BUDGET;
use mblflow_core::transport::{BathFamily, InitialState};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that replaces `experiment.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MBLFLOW_OUTPUT_DIR";

/// Denominator used to turn `flow.beta` into an exact ratio.
pub const BETA_DENOMINATOR: i128 = 1000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub flow: FlowSection,
    pub liom: LiomSection,
    pub scan: ScanSection,
    pub census: CensusSection,
    pub transport: TransportSection,
    pub lemmas: LemmaSection,
    pub experiment: ExperimentSection,
    pub budgets: BudgetSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub chain_len: usize,
    pub gamma: f64,
    pub ensemble: Ensemble,
    pub c_kappa: f64,
    pub i_max: usize,
    /// Explicit bond couplings; drawn from the seed when absent.
    pub kappa: Option<Vec<f64>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { chain_len: 8, gamma: 0.05, ensemble: Ensemble::Random, c_kappa: 1.0, i_max: 3, kappa: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub beta: f64,
    /// `None` means `γ^{1/4}`.
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub k_max: usize,
    pub eta_den: Option<f64>,
    pub eta_den_margin: f64,
    pub eta_series: f64,
    pub eta_conv: f64,
    pub eta_drop: f64,
    pub n_max: usize,
    pub mode: FlowMode,
    pub length_proxy: LengthProxy,
    pub dense_cutoff: usize,
    pub w_max: u32,
    pub max_states: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            beta: 0.9,
            delta: None,
            epsilon: None,
            k_max: 6,
            eta_den: None,
            eta_den_margin: 1e-2,
            eta_series: 1e-14,
            eta_conv: 1e-12,
            eta_drop: 1e-14,
            n_max: 40,
            mode: FlowMode::Aggregate,
            length_proxy: LengthProxy::ActiveHull,
            dense_cutoff: 10,
            w_max: 8,
            max_states: 1 << 18,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiomSection {
    /// Sites whose `Z` is rotated; empty means the middle site.
    pub sites: Vec<usize>,
    pub direction: DirectionName,
}

impl Default for LiomSection {
    fn default() -> Self {
        LiomSection { sites: Vec::new(), direction: DirectionName::Conjugate }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionName {
    Conjugate,
    InverseConjugate,
}

impl From<DirectionName> for Direction {
    fn from(d: DirectionName) -> Direction {
        match d {
            DirectionName::Conjugate => Direction::Conjugate,
            DirectionName::InverseConjugate => Direction::InverseConjugate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub epsilons: Vec<f64>,
    pub max_len: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { epsilons: vec![0.4, 0.2, 0.1, 0.05], max_len: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusSection {
    pub k_max: usize,
    pub w_max: u32,
    pub max_states: usize,
}

impl Default for CensusSection {
    fn default() -> Self {
        CensusSection { k_max: 1, w_max: 10, max_states: 1 << 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub family: BathFamily,
    pub initial: InitialName,
    pub beta_l: f64,
    pub beta_r: f64,
    pub lengths: Vec<usize>,
    /// Final times; one sweep per entry.
    pub times: Vec<f64>,
    pub n_steps: usize,
}

impl Default for TransportSection {
    fn default() -> Self {
        TransportSection {
            family: BathFamily::TwoLevel,
            initial: InitialName::Thermal,
            beta_l: 0.2,
            beta_r: 5.0,
            lengths: vec![4, 6, 8],
            times: vec![1e3],
            n_steps: 1,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialName {
    Thermal,
    MaximallyMixed,
    PureRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaSection {
    pub spectral_dims: Vec<usize>,
    pub spectral_epsilons: Vec<f64>,
    pub spectral_trials: usize,
    pub resolvent_depth: usize,
    pub resolvent_trials: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        LemmaSection {
            spectral_dims: vec![5, 10, 20],
            spectral_epsilons: vec![0.01, 0.05, 0.1],
            spectral_trials: 1000,
            resolvent_depth: 5,
            resolvent_trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// One disorder realization per seed.
    pub seeds: Vec<u64>,
    /// Monte-Carlo samples per seed for the resonance scan.
    pub samples: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { seeds: vec![0], samples: 1000, output_dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    /// Largest dense matrix dimension, baths included.
    pub dense_dim: usize,
    /// Rough cap on dense working memory.
    pub memory_mb: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection { dense_dim: DEFAULT_DENSE_BUDGET, memory_mb: 4096 }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parse a config text, apply overrides, and validate.
pub fn load(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_error(e.to_string()))?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        set_key(&mut table, "experiment.output_dir", toml::Value::String(dir))?;
    }
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| config_error(format!("override `{o}` is not of the form section.key=value")))?;
        set_key(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let cfg: RunConfig = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| config_error(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A bare word that is not valid TOML is taken as a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let (section, field) = key.split_once('.').ok_or_else(|| config_error(format!("override key `{key}` must be section.key")))?;
    let entry = table.entry(section.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(config_error(format!("`{section}` is not a section")));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiment.seeds.is_empty() {
            return Err(config_error("experiment.seeds must be nonempty"));
        }
        self.model_params(self.experiment.seeds[0]).validate().map_err(|e| config_error(format!("model: {e}")))?;
        self.flow_params().map_err(|e| config_error(format!("flow: {e}")))?.validate().map_err(|e| config_error(format!("flow: {e}")))?;
        if let Some(&x) = self.liom.sites.iter().find(|&&x| x >= self.model.chain_len) {
            return Err(config_error(format!("liom.sites entry {x} outside the chain")));
        }
        if self.scan.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(config_error("scan.epsilons must lie in (0, 1)"));
        }
        if self.scan.max_len == 0 {
            return Err(config_error("scan.max_len must be positive"));
        }
        if self.transport.lengths.is_empty() || self.transport.lengths.contains(&0) {
            return Err(config_error("transport.lengths must be nonempty and positive"));
        }
        if self.transport.times.is_empty() || self.transport.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(config_error("transport.times must be nonempty and positive"));
        }
        if self.transport.n_steps == 0 {
            return Err(config_error("transport.n_steps must be positive"));
        }
        if self.lemmas.resolvent_depth == 0 {
            return Err(config_error("lemmas.resolvent_depth must be at least 1"));
        }
        if self.lemmas.spectral_dims.contains(&0) {
            return Err(config_error("lemmas.spectral_dims must be positive"));
        }
        if self.lemmas.spectral_epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(config_error("lemmas.spectral_epsilons must lie in (0, 1)"));
        }
        if self.budgets.dense_dim == 0 || self.budgets.memory_mb == 0 {
            return Err(config_error("budgets must be positive"));
        }
        Ok(())
    }

    pub fn model_params(&self, seed: u64) -> ModelParams {
        let m = &self.model;
        let mut p = ModelParams::new(m.chain_len, m.gamma, m.ensemble, seed);
        p.c_kappa = m.c_kappa;
        p.i_max = m.i_max;
        p.kappa = m.kappa.clone();
        p
    }

    pub fn flow_params(&self) -> mblflow_core::Result<FlowParams> {
        let f = &self.flow;
        let mut p = FlowParams::new(self.model.gamma, ScaleLadder::from_f64(f.beta, BETA_DENOMINATOR)?);
        if let Some(e) = f.epsilon {
            p.epsilon = e;
        }
        if let Some(d) = f.delta {
            p.delta = d;
        }
        p.k_max = f.k_max;
        p.eta_den = f.eta_den;
        p.eta_den_margin = f.eta_den_margin;
        p.eta_series = f.eta_series;
        p.eta_conv = f.eta_conv;
        p.eta_drop = f.eta_drop;
        p.n_max = f.n_max;
        p.mode = f.mode;
        p.length_proxy = f.length_proxy;
        p.dense_cutoff = f.dense_cutoff;
        p.w_max = f.w_max;
        p.max_states = f.max_states;
        Ok(p)
    }

    pub fn initial_state(&self) -> InitialState {
        let t = &self.transport;
        match t.initial {
            InitialName::Thermal => InitialState::Thermal { beta_l: t.beta_l, beta_r: t.beta_r },
            InitialName::MaximallyMixed => InitialState::MaximallyMixed,
            InitialName::PureRandom => InitialState::PureRandom,
        }
    }

    /// Canonical text form, the input of the config hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
