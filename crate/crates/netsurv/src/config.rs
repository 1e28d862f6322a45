//! Study configuration files.
//!
//! A study is described by a flat JSON object. Unknown keys are rejected, all
//! of them at once, before anything runs. Missing keys take the defaults of
//! [`StudyConfig::default`].

use std::path::{Path, PathBuf};

use netsurv_core::causal::{ModelSpec, Theta};
use netsurv_core::inference::GridAxis;
use netsurv_core::randomize::{Method, StatKind};
use netsurv_core::simulate::{NetworkSpec, Scenario, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::read_edges;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Type1,
    Power,
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkConfig {
    Poisson { mean: f64 },
    Pa { m_edges: usize },
    File { path: PathBuf },
}

/// Replicates and draws used with the full-scale switch.
pub const FULL_REPLICATES: usize = 2000;
pub const FULL_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub n: usize,
    pub m: usize,
    pub network: NetworkConfig,
    pub mu: f64,
    pub sigma: f64,
    pub omega: f64,
    pub delta_true: f64,
    pub tau_true: f64,
    pub k: f64,
    pub correlated: bool,
    pub replicates: usize,
    pub draws: usize,
    pub stats: Vec<String>,
    pub methods: Vec<String>,
    pub model: String,
    /// Explicit hypotheses `[[delta0, tau0], ...]`.
    pub theta0: Vec<[f64; 2]>,
    /// Grid axes (`start:stop:step` or lists); combined with `theta0`.
    pub delta_grid: Option<String>,
    pub tau_grid: Option<String>,
    pub alpha_levels: Vec<f64>,
    /// Level of the confidence sets in a coverage study.
    pub alpha: f64,
    pub master_seed: u64,
    pub regenerate_network: bool,
    pub full_scale: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            kind: StudyKind::Type1,
            n: 128,
            m: 96,
            network: NetworkConfig::Poisson { mean: 16.0 },
            mu: s.mu,
            sigma: s.sigma,
            omega: s.omega,
            delta_true: s.delta_true,
            tau_true: s.tau_true,
            k: s.k,
            correlated: false,
            replicates: 500,
            draws: 1000,
            stats: vec!["logr".into(), "lraft".into()],
            methods: vec!["fixed".into(), "ipz".into()],
            model: "add-G".into(),
            theta0: Vec::new(),
            delta_grid: None,
            tau_grid: None,
            alpha_levels: vec![0.01, 0.05, 0.1],
            alpha: 0.05,
            master_seed: 1,
            regenerate_network: false,
            full_scale: false,
        }
    }
}

const KEYS: &[&str] = &[
    "kind",
    "n",
    "m",
    "network",
    "mu",
    "sigma",
    "omega",
    "delta_true",
    "tau_true",
    "k",
    "correlated",
    "replicates",
    "draws",
    "stats",
    "methods",
    "model",
    "theta0",
    "delta_grid",
    "tau_grid",
    "alpha_levels",
    "alpha",
    "master_seed",
    "regenerate_network",
    "full_scale",
];

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("config is not valid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| CliError::usage("config must be a JSON object"))?;
        let unknown: Vec<&str> = obj.keys().map(String::as_str).filter(|k| !KEYS.contains(k)).collect();
        if !unknown.is_empty() {
            return Err(CliError::usage(format!(
                "unknown config key(s): {} (known: {})",
                unknown.join(", "),
                KEYS.join(", ")
            )));
        }
        serde_json::from_value(value).map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    /// Canonical JSON of the resolved configuration, used for digests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn hypotheses(&self) -> Result<Vec<Theta>, CliError> {
        let mut out: Vec<Theta> = self.theta0.iter().map(|t| Theta::new(t[0], t[1])).collect();
        match (&self.delta_grid, &self.tau_grid) {
            (Some(d), Some(t)) => {
                let d: GridAxis = d.parse()?;
                let t: GridAxis = t.parse()?;
                for &dv in d.values() {
                    for &tv in t.values() {
                        let th = Theta::new(dv, tv);
                        if !out.contains(&th) {
                            out.push(th);
                        }
                    }
                }
            }
            (None, None) => {}
            _ => return Err(CliError::usage("delta_grid and tau_grid must be given together")),
        }
        Ok(out)
    }

    /// Resolve into an engine configuration, loading a network file if named.
    pub fn to_sim(&self, base_dir: Option<&Path>) -> Result<SimConfig, CliError> {
        let parse_list = |items: &[String], what: &str| -> Result<(), CliError> {
            if items.is_empty() {
                return Err(CliError::usage(format!("`{what}` must not be empty")));
            }
            Ok(())
        };
        parse_list(&self.stats, "stats")?;
        parse_list(&self.methods, "methods")?;
        let stats =
            self.stats.iter().map(|s| s.parse::<StatKind>().map_err(CliError::from)).collect::<Result<Vec<_>, _>>()?;
        let methods =
            self.methods.iter().map(|s| s.parse::<Method>().map_err(CliError::from)).collect::<Result<Vec<_>, _>>()?;
        let model: ModelSpec = self.model.parse()?;
        let network = match &self.network {
            NetworkConfig::Poisson { mean } => NetworkSpec::Poisson { mean: *mean },
            NetworkConfig::Pa { m_edges } => NetworkSpec::PreferentialAttachment { m_edges: *m_edges },
            NetworkConfig::File { path } => {
                let full = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                NetworkSpec::Fixed(read_edges(&full, Some(self.n))?)
            }
        };
        let theta0 = self.hypotheses()?;
        if self.kind != StudyKind::Type1 && theta0.is_empty() {
            return Err(CliError::usage("power and coverage studies need `theta0` or a grid"));
        }
        let (replicates, draws) =
            if self.full_scale { (FULL_REPLICATES, FULL_DRAWS) } else { (self.replicates, self.draws) };
        let sim = SimConfig {
            n: self.n,
            m: self.m,
            network,
            scenario: Scenario {
                mu: self.mu,
                sigma: self.sigma,
                omega: self.omega,
                delta_true: self.delta_true,
                tau_true: self.tau_true,
                k: self.k,
            },
            correlated: self.correlated,
            replicates,
            draws,
            stats,
            methods,
            theta0,
            model,
            alpha_levels: self.alpha_levels.clone(),
            master_seed: self.master_seed,
            regenerate_network: self.regenerate_network,
        };
        sim.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::usage("alpha must lie in (0, 1)"));
        }
        Ok(sim)
    }
}
