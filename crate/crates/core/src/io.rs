//! Run configuration: a JSON file pointing at the parameter set and OCP
//! tables, plus discretization, solver, observability and optimizer settings.
//! Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::CellModel;
use crate::error::{ModelError, Result};
use crate::identify::PsoConfig;
use crate::model::DiscretizationConfig;
use crate::observability::ObservabilityConfig;
use crate::ocp::{Interpolation, OcpSet, OcpTable};
use crate::params::ParameterSet;
use crate::sim::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcpPaths {
    pub positive_charge: PathBuf,
    pub positive_discharge: PathBuf,
    pub negative: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `ParameterSet` JSON; the built-in reference set when absent.
    #[serde(default)]
    pub parameters: Option<PathBuf>,
    /// OCP tables (`theta,volts` CSV); synthetic curves when absent.
    #[serde(default)]
    pub ocp: Option<OcpPaths>,
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Rate-dependent parameter column to use ("C/4", "C/2", "1C"); the base
    /// set when absent, unless a command infers it from the current.
    #[serde(default)]
    pub rate: Option<String>,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub observability: ObservabilityConfig,
    #[serde(default)]
    pub optimizer: PsoConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            parameters: None,
            ocp: None,
            interpolation: Interpolation::default(),
            rate: None,
            discretization: DiscretizationConfig::default(),
            solver: SolverConfig::default(),
            observability: ObservabilityConfig::default(),
            optimizer: PsoConfig::default(),
            output_dir: None,
        }
    }
}

/// A validated configuration with its referenced files loaded.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub parameters: ParameterSet,
    pub ocp: OcpSet,
}

fn existing(base: &Path, p: &Path) -> Result<PathBuf> {
    let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    if !full.is_file() {
        return Err(ModelError::MissingFile(full.display().to_string()));
    }
    Ok(full)
}

pub fn read_parameter_set(path: &Path) -> Result<ParameterSet> {
    if !path.is_file() {
        return Err(ModelError::MissingFile(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| ModelError::Io(e.to_string()))?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(ModelError::MissingFile(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))
    }

    /// Load referenced files relative to `base` and check every invariant.
    pub fn resolve(self, base: &Path) -> Result<LoadedConfig> {
        self.discretization.validate()?;
        self.solver.validate()?;
        self.observability.validate()?;
        self.optimizer.validate()?;
        let parameters = match &self.parameters {
            Some(p) => read_parameter_set(&existing(base, p)?)?,
            None => ParameterSet::lfp_reference(),
        };
        parameters.cell.validate()?;
        for label in parameters.rates.keys() {
            parameters
                .for_rate(Some(label))
                .validate()
                .map_err(|e| ModelError::Parameter(format!("rate '{label}': {e}")))?;
        }
        if let Some(r) = &self.rate {
            if !parameters.rates.contains_key(r) {
                return Err(ModelError::Config(format!("rate '{r}' has no parameter column")));
            }
        }
        let ocp = match &self.ocp {
            Some(o) => OcpSet {
                positive_charge: OcpTable::read_csv(&existing(base, &o.positive_charge)?, self.interpolation)?,
                positive_discharge: OcpTable::read_csv(&existing(base, &o.positive_discharge)?, self.interpolation)?,
                negative: OcpTable::read_csv(&existing(base, &o.negative)?, self.interpolation)?,
            },
            None => OcpSet::synthetic(&parameters.cell)?.with_mode(self.interpolation),
        };
        Ok(LoadedConfig { config: self, parameters, ocp })
    }

    /// Read and resolve a config file; `None` gives the built-in defaults.
    pub fn load(path: Option<&Path>) -> Result<LoadedConfig> {
        match path {
            Some(p) => {
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                RunConfig::read(p)?.resolve(&base)
            }
            None => RunConfig::default().resolve(Path::new(".")),
        }
    }
}

impl LoadedConfig {
    /// Model for a C-rate label (falling back to the configured rate).
    pub fn model(&self, rate: Option<&str>) -> Result<CellModel> {
        self.model_with(rate, self.config.discretization.clone())
    }

    pub fn model_with(&self, rate: Option<&str>, disc: DiscretizationConfig) -> Result<CellModel> {
        let label = rate.or(self.config.rate.as_deref());
        CellModel::new(self.parameters.for_rate(label), disc, self.ocp.clone())
    }

    /// Label of the rate column closest (in log ratio) to `|current|`.
    pub fn nearest_rate(&self, current: f64) -> Option<String> {
        let c = current.abs() / self.parameters.cell.c_rate_current(1.0);
        if !(c > 0.0) {
            return None;
        }
        self.parameters
            .rates
            .keys()
            .filter_map(|l| parse_c_rate(l).map(|r| (l, (r / c).ln().abs())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(l, _)| l.clone())
    }
}

/// "C/4" -> 0.25, "1C" -> 1, "2C" -> 2.
pub fn parse_c_rate(label: &str) -> Option<f64> {
    if let Some(d) = label.strip_prefix("C/") {
        return d.parse::<f64>().ok().filter(|d| *d > 0.0).map(|d| 1.0 / d);
    }
    label.strip_suffix('C')?.parse::<f64>().ok().filter(|r| *r > 0.0)
}
