//! Run configuration: one structured-text file drives a whole match or
//! experiment. All referenced files are resolved and inlined up front, so the
//! config hash covers everything that can influence a run.

use crate::behavior::{ChannelConfig, RobotConfig};
use crate::field::FieldConfig;
use crate::sim::SimConfig;
use crate::RobotId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub master: u64,
    /// Per-stream seed overrides (e.g. `"scan/1" = 99`).
    pub overrides: BTreeMap<String, u64>,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            master: 42,
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TeamsConfig {
    pub home: usize,
    pub away: usize,
}

impl Default for TeamsConfig {
    fn default() -> Self {
        Self { home: 4, away: 4 }
    }
}

/// A scripted robot failure: the robot stops ticking and emitting heartbeats.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeathEvent {
    pub robot: RobotId,
    pub time: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub version: u32,
    pub seeds: Seeds,
    pub duration: f64,
    pub teams: TeamsConfig,
    pub field: FieldConfig,
    /// External field description; inlined into `field` when resolved.
    pub field_file: Option<PathBuf>,
    pub sim: SimConfig,
    pub robot: RobotConfig,
    pub channel: ChannelConfig,
    pub rules_file: Option<PathBuf>,
    pub tactics_file: Option<PathBuf>,
    pub des_model_file: Option<PathBuf>,
    /// Inlined DES model text (from `des_model_file` or the shipped example).
    pub des_model: Option<String>,
    pub deaths: Vec<DeathEvent>,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: 1,
            seeds: Seeds::default(),
            duration: 60.0,
            teams: TeamsConfig::default(),
            field: FieldConfig::default(),
            field_file: None,
            sim: SimConfig::default(),
            robot: RobotConfig::default(),
            channel: ChannelConfig::default(),
            rules_file: None,
            tactics_file: None,
            des_model_file: None,
            des_model: None,
            deaths: Vec::new(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<inline>".into(),
            detail: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    /// Inlines referenced files relative to `base` and drops the path fields
    /// from further consideration.
    pub fn resolve(&mut self, base: &Path) -> Result<(), ConfigError> {
        let read = |p: &PathBuf| -> Result<String, ConfigError> {
            let full = if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            };
            std::fs::read_to_string(&full).map_err(|e| ConfigError::Io {
                path: full.display().to_string(),
                source: e,
            })
        };
        if let Some(p) = &self.field_file {
            let text = read(p)?;
            self.field = toml::from_str(&text).map_err(|e| ConfigError::Parse {
                path: p.display().to_string(),
                detail: e.to_string(),
            })?;
        }
        if let Some(p) = &self.rules_file {
            self.robot.behavior.rules_toml = Some(read(p)?);
        }
        if let Some(p) = &self.tactics_file {
            self.robot.behavior.tactics_toml = Some(read(p)?);
        }
        if let Some(p) = &self.des_model_file {
            self.des_model = Some(read(p)?);
        }
        Ok(())
    }

    /// Enumerates every validation problem before any simulation starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.duration <= 0.0 {
            problems.push(format!("duration must be positive, got {}", self.duration));
        }
        if self.sim.dt <= 0.0 {
            problems.push("sim.dt must be positive".into());
        }
        if self.teams.home + self.teams.away == 0 {
            problems.push("at least one robot required".into());
        }
        if self.teams.home > 8 || self.teams.away > 8 {
            problems.push("team sizes above 8 are not supported".into());
        }
        if let Err(e) = crate::field::FieldModel::from_config(&self.field) {
            problems.push(format!("field: {e}"));
        }
        if let Some(text) = &self.robot.behavior.rules_toml {
            if let Err(e) = crate::behavior::RuleTable::parse(text) {
                problems.push(format!("rules: {e}"));
            }
        }
        if let Some(text) = &self.robot.behavior.tactics_toml {
            if let Err(e) = crate::behavior::TacticTable::parse(text) {
                problems.push(format!("tactics: {e}"));
            }
        }
        if let Some(text) = &self.des_model {
            if let Err(e) = crate::des::parse_model_file(text) {
                problems.push(format!("des model: {e}"));
            }
        }
        for d in &self.deaths {
            if d.time < 0.0 || d.time > self.duration {
                problems.push(format!(
                    "death of robot {} at {} outside the match duration",
                    d.robot, d.time
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    /// Content hash of the resolved configuration. Two configs that differ
    /// only in whitespace or comments hash identically because hashing runs
    /// over the parsed structure, not the source text.
    pub fn content_hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Robot ids for both teams: home takes 1..=home, away follows.
    pub fn rosters(&self) -> (Vec<RobotId>, Vec<RobotId>) {
        let home: Vec<RobotId> = (1..=self.teams.home as u8).collect();
        let away: Vec<RobotId> = (self.teams.home as u8 + 1
            ..=(self.teams.home + self.teams.away) as u8)
            .collect();
        (home, away)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = RunConfig::from_toml("duration = 30.0\n[seeds]\nmaster = 7\n").unwrap();
        let b = RunConfig::from_toml(
            "# a comment\nduration   =   30.0\n\n[seeds]\nmaster=7 # inline\n",
        )
        .unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = RunConfig::from_toml("duration = 31.0\n[seeds]\nmaster = 7\n").unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn missing_field_file_fails_before_simulation() {
        let mut cfg = RunConfig::default();
        cfg.field_file = Some(PathBuf::from("does-not-exist.toml"));
        assert!(cfg.resolve(Path::new(".")).is_err());
    }

    #[test]
    fn validation_enumerates_all_problems() {
        let mut cfg = RunConfig::default();
        cfg.duration = -1.0;
        cfg.teams = TeamsConfig { home: 0, away: 0 };
        cfg.deaths.push(DeathEvent {
            robot: 1,
            time: 999.0,
        });
        match cfg.validate() {
            Err(ConfigError::Invalid(problems)) => assert!(problems.len() >= 3),
            other => panic!("expected enumerated problems, got {other:?}"),
        }
    }
}
