//! Layered settings: named profile, then an optional TOML file, then
//! `key.path=value` overrides from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use neuroevo_core::evolution::{EnergyRegime, EvolutionConfig};
use neuroevo_core::gridworld::MAX_SEASONS;
use neuroevo_core::seeds::{self, purpose};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full-scale settings: 150 individuals, 400 generations, 20 runs.
    #[default]
    Full,
    /// Minutes-scale settings for checks on a workstation.
    Desk,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" => Ok(Profile::Full),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile {other:?} (expected full or desk)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Full => "full",
            Profile::Desk => "desk",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub master_seed: u64,
    pub environments: Vec<usize>,
    pub regimes: Vec<EnergyRegime>,
    pub runs_per_cell: usize,
    /// Write a checkpoint every this many generations (and at the end).
    pub checkpoint_every: usize,
    /// Concurrent runs; 0 lets the thread pool decide.
    pub workers: usize,
    pub output: PathBuf,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            master_seed: 0,
            environments: vec![1, 2, 3, 4],
            regimes: EnergyRegime::ALL.to_vec(),
            runs_per_cell: 20,
            checkpoint_every: 25,
            workers: 0,
            output: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub experiment: ExperimentSettings,
    #[serde(default)]
    pub evolution: EvolutionConfig,
}

impl Settings {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Full => Self {
                profile,
                experiment: ExperimentSettings::default(),
                evolution: EvolutionConfig::default(),
            },
            Profile::Desk => Self {
                profile,
                experiment: ExperimentSettings {
                    runs_per_cell: 5,
                    ..ExperimentSettings::default()
                },
                evolution: EvolutionConfig::desk(),
            },
        }
    }

    /// Build settings from a profile, an optional TOML file and overrides
    /// such as `evolution.population_size=30`. A profile named on the
    /// command line wins over one named in the file.
    pub fn load(profile: Option<Profile>, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let file_table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        let file_profile = match file_table.get("profile") {
            Some(toml::Value::String(s)) => Some(s.parse::<Profile>().map_err(HarnessError::Config)?),
            Some(other) => return Err(HarnessError::Config(format!("profile must be a string, got {other}"))),
            None => None,
        };
        let profile = profile.or(file_profile).unwrap_or_default();
        let mut table = toml::Table::try_from(Settings::profile(profile))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut table, file_table);
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        table.insert("profile".into(), toml::Value::String(profile.to_string()));
        let settings: Settings = table
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.environments.is_empty() || e.regimes.is_empty() {
            return Err(HarnessError::Config("environments and regimes must be nonempty".into()));
        }
        if let Some(bad) = e.environments.iter().find(|&&n| n == 0 || n > MAX_SEASONS) {
            return Err(HarnessError::Config(format!("environment {bad} outside 1..={MAX_SEASONS}")));
        }
        if e.runs_per_cell == 0 {
            return Err(HarnessError::Config("runs_per_cell must be at least 1".into()));
        }
        if e.checkpoint_every == 0 {
            return Err(HarnessError::Config("checkpoint_every must be at least 1".into()));
        }
        // per-run fields are filled in later; check the rest with a valid stand-in
        let probe = EvolutionConfig {
            n_seasons: e.environments[0],
            ..self.evolution.clone()
        };
        probe.validate().map_err(|err| HarnessError::Config(err.to_string()))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Apply `a.b.c=value`; the value is read as a TOML literal, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {spec:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one item");
    let mut cur = table;
    for k in parents {
        cur = match cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => return Err(HarnessError::Config(format!("{path}: {k} is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Seed of one run, derived from the master seed and the run's cell.
pub fn run_seed(master_seed: u64, regime: EnergyRegime, n_seasons: usize, run_index: usize) -> u64 {
    seeds::derive(
        master_seed,
        &[purpose::RUN, regime.tag(), n_seasons as u64, run_index as u64],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let d = Settings::profile(Profile::Desk);
        assert_eq!(d.experiment.runs_per_cell, 5);
        assert_eq!(d.evolution.population_size, 24);
        assert_eq!(Settings::profile(Profile::Full).experiment.runs_per_cell, 20);
    }

    #[test]
    fn layering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "profile = \"desk\"\n[experiment]\nmaster_seed = 9\nregimes = [\"EC\"]\n[evolution]\ngenerations = 7\n",
        )
        .unwrap();
        let s = Settings::load(None, Some(&path), &["evolution.generations=3".into()]).unwrap();
        assert_eq!(s.profile, Profile::Desk);
        assert_eq!(s.experiment.master_seed, 9);
        assert_eq!(s.experiment.regimes, vec![EnergyRegime::Ec]);
        assert_eq!(s.evolution.generations, 3);
        assert_eq!(s.evolution.population_size, 24);
        let p = Settings::load(Some(Profile::Full), Some(&path), &[]).unwrap();
        assert_eq!(p.evolution.population_size, 150);
    }

    #[test]
    fn bad_settings_are_config_errors() {
        for ov in ["experiment.environments=[5]", "evolution.elites=9", "nonsense=1", "experiment.runs_per_cell=0"] {
            let err = Settings::load(Some(Profile::Desk), None, &[ov.into()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{ov}: {err}");
        }
    }

    #[test]
    fn seeds_depend_on_every_coordinate() {
        let base = run_seed(1, EnergyRegime::Nec, 1, 0);
        assert_ne!(base, run_seed(2, EnergyRegime::Nec, 1, 0));
        assert_ne!(base, run_seed(1, EnergyRegime::Ec, 1, 0));
        assert_ne!(base, run_seed(1, EnergyRegime::Nec, 2, 0));
        assert_ne!(base, run_seed(1, EnergyRegime::Nec, 1, 1));
        assert_eq!(base, run_seed(1, EnergyRegime::Nec, 1, 0));
    }
}
