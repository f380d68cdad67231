//! TOML scenario files.
//!
//! Relative paths inside a scenario file are resolved against the directory
//! containing it.
//!
//! ```toml
//! network = "network.csv"
//! profiles = "profiles.csv"
//! tariff = "tariff.csv"            # optional, default time-of-use tariff
//! communities = "communities.csv"  # optional, default every residence
//! community = "com-1"
//! adoption = [0.3, 0.6, 0.9]
//! seeds = [1, 2, 3, 4, 5]
//! mode = "both"
//!
//! [admm]
//! kappa = 1.0
//!
//! [limits]
//! v_min = 0.95
//! v_max = 1.05
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::admm::AdmmConfig;
use crate::error::{RevsError, Result};
use crate::generator::GeneratedFeeder;
use crate::network::{DistributionNetwork, NodeId, VoltageLimits};
use crate::scenario::{communities_to_csv, read_communities, Mode, Scenario};
use crate::table::write_text;
use crate::tariff::{load_profiles, load_tariff, profiles_to_csv, EvDefaults, Tariff};

/// Voltage band as magnitudes in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { v_min: 0.95, v_max: 1.05 }
    }
}

fn default_adoption() -> Vec<f64> {
    vec![0.3, 0.6, 0.9]
}

fn default_mode() -> Mode {
    Mode::Both
}

fn default_start() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: PathBuf,
    pub profiles: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tariff: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub communities: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community: Option<String>,
    #[serde(default = "default_adoption")]
    pub adoption: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_start")]
    pub horizon_start_hour: usize,
    /// Report directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub ev: EvDefaults,
    #[serde(default)]
    pub limits: LimitsConfig,
}

impl ScenarioConfig {
    /// A config pointing at `network` and `profiles` with every other field defaulted.
    pub fn new(network: impl Into<PathBuf>, profiles: impl Into<PathBuf>) -> Self {
        Self {
            network: network.into(),
            profiles: profiles.into(),
            tariff: None,
            communities: None,
            community: None,
            adoption: default_adoption(),
            seeds: Vec::new(),
            mode: default_mode(),
            horizon_start_hour: default_start(),
            output: None,
            admm: AdmmConfig::default(),
            ev: EvDefaults::default(),
            limits: LimitsConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RevsError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            RevsError::Config(m) => RevsError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses TOML text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| RevsError::Config(e.to_string()))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.network);
        join(&mut self.profiles);
        for p in [&mut self.tariff, &mut self.communities, &mut self.output].into_iter().flatten() {
            join(p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| RevsError::Config(e.to_string()))
    }

    pub fn voltage_limits(&self) -> Result<VoltageLimits> {
        VoltageLimits::from_magnitudes(self.limits.v_min, self.limits.v_max)
    }

    /// Loads every referenced file and assembles a validated scenario.
    pub fn build(&self) -> Result<Scenario> {
        let network = DistributionNetwork::read_csv(&self.network)?;
        let profiles = load_profiles(&self.profiles, &network)?;
        let tariff = match &self.tariff {
            Some(p) => load_tariff(p)?,
            None => Tariff::experiment_default(),
        };
        let community = self.select_community(&network)?;
        let mut admm = self.admm.clone();
        admm.limits = self.voltage_limits()?;
        let scenario = Scenario {
            network,
            profiles,
            tariff,
            community,
            adoption: self.adoption.clone(),
            seeds: self.seeds.clone(),
            ev: self.ev,
            mode: self.mode,
            horizon_start_hour: self.horizon_start_hour,
            admm,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Members of the configured community, or every residence when no file is given.
    pub fn select_community(&self, network: &DistributionNetwork) -> Result<Vec<NodeId>> {
        let Some(path) = &self.communities else {
            if self.community.is_some() {
                return Err(RevsError::Config("`community` given without a `communities` file".into()));
            }
            return Ok(network.residences().to_vec());
        };
        let mut all = read_communities(path, network)?;
        match &self.community {
            Some(name) => all
                .remove(name)
                .ok_or_else(|| RevsError::Config(format!("community {name:?} not found in {}", path.display()))),
            None if all.len() == 1 => Ok(all.into_values().next().expect("one community")),
            None => Err(RevsError::Config(format!(
                "{} defines {} communities; choose one with `community`",
                path.display(),
                all.len()
            ))),
        }
    }
}

/// Writes a generated feeder as `network.csv`, `profiles.csv`,
/// `communities.csv`, `tariff.csv` and a `scenario.toml` that refers to
/// them. Returns the config as written.
pub fn write_generated(dir: &Path, feeder: &GeneratedFeeder, seeds: &[u64]) -> Result<ScenarioConfig> {
    write_text(&dir.join("network.csv"), &feeder.network.to_csv())?;
    write_text(&dir.join("profiles.csv"), &profiles_to_csv(&feeder.profiles))?;
    write_text(&dir.join("communities.csv"), &communities_to_csv(&feeder.communities))?;
    write_text(&dir.join("tariff.csv"), &Tariff::experiment_default().to_csv())?;
    let mut cfg = ScenarioConfig::new("network.csv", "profiles.csv");
    cfg.tariff = Some("tariff.csv".into());
    cfg.communities = Some("communities.csv".into());
    cfg.community = feeder.communities.keys().next().cloned();
    cfg.seeds = seeds.to_vec();
    write_text(&dir.join("scenario.toml"), &cfg.to_toml()?)?;
    Ok(cfg)
}
