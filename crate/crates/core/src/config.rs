//! Run configuration: a TOML file with `env`, `train`, `validate` and `qp`
//! sections plus `output_dir` and `seed`, and `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clbf_validate::Lemma1Report;
use crate::clf_cbf_qp::QpConfig;
use crate::env2d::{EnvConfig, NavEnv};
use crate::error::{Error, Result};
use crate::lbac::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Rollouts pooled for the decrease check.
    pub n_rollouts: usize,
    pub bootstrap_resamples: usize,
    /// Policy rollouts from the initial region for level separation.
    pub level_safe_starts: usize,
    /// Fixed-action probes aimed into each obstacle for level separation.
    pub level_probes_per_obstacle: usize,
    pub contour_nx: usize,
    pub contour_ny: usize,
    /// Start positions for `rollout`; empty means `n_eval_starts` draws from
    /// the initial region.
    pub rollout_starts: Vec<[f64; 2]>,
    pub n_eval_starts: usize,
    /// Mean actions when true, sampled actions otherwise.
    pub deterministic: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 30,
            bootstrap_resamples: 1000,
            level_safe_starts: 30,
            level_probes_per_obstacle: 16,
            contour_nx: 151,
            contour_ny: 91,
            rollout_starts: Vec::new(),
            n_eval_starts: 20,
            deterministic: true,
        }
    }
}

impl ValidateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rollouts < 30 {
            return Err(Error::Config("validate.n_rollouts must be at least 30".into()));
        }
        if self.contour_nx < 2 || self.contour_ny < 2 {
            return Err(Error::Config("validate.contour_nx and contour_ny must be at least 2".into()));
        }
        if self.rollout_starts.is_empty() && self.n_eval_starts == 0 {
            return Err(Error::Config("validate needs rollout_starts or n_eval_starts > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub validate: ValidateConfig,
    pub qp: QpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            seed: 0,
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            validate: ValidateConfig::default(),
            qp: QpConfig::default(),
        }
    }
}

/// Checked configuration with the environment it describes.
#[derive(Debug, Clone)]
pub struct Validated {
    pub env: NavEnv,
    pub lemma1: Lemma1Report,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string.
fn parse_value(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(config_err)
    }

    /// Applies `a.b.c=value` to the key path `a.b.c`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key=value")))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("override key '{key}' is malformed")));
        }
        let mut root = toml::Value::try_from(&*self).map_err(config_err)?;
        let mut node = &mut root;
        for (depth, part) in path.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override key '{key}' descends into a non-table")))?;
            if depth + 1 == path.len() {
                table.insert((*part).to_string(), parse_value(value.trim()));
                break;
            }
            node = table
                .get_mut(*part)
                .ok_or_else(|| Error::Config(format!("unknown config section '{part}' in '{key}'")))?;
        }
        *self = root
            .try_into()
            .map_err(|e| Error::Config(format!("override '{spec}': {e}")))?;
        Ok(())
    }

    pub fn apply_overrides<S: AsRef<str>>(&mut self, specs: &[S]) -> Result<()> {
        specs.iter().try_for_each(|s| self.apply_override(s.as_ref()))
    }

    pub fn validate(&self) -> Result<Validated> {
        let env = NavEnv::new(self.env.clone())?;
        let lemma1 = self.train.validate(&env)?;
        self.validate.validate()?;
        self.qp.validate()?;
        Ok(Validated { env, lemma1 })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env2d::InitRegion;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
        assert_eq!(RunConfig::from_toml_str("").unwrap(), c);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[train]\ngama = 0.9\n").is_err());
        assert!(RunConfig::from_toml_str("colour = 1\n").is_err());
        let mut c = RunConfig::default();
        assert!(c.apply_override("train.gama=0.9").is_err());
        assert!(c.apply_override("nosuch.key=1").is_err());
        assert!(c.apply_override("train.gamma").is_err());
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn overrides_reach_every_section() {
        let mut c = RunConfig::default();
        c.apply_overrides(&[
            "train.episodes_total=1",
            "train.actor_q_state=current",
            "train.hidden=[32, 32]",
            "env.tau_v=0",
            "env.goal_center=[0.0, 0.6]",
            "validate.deterministic=false",
            "qp.margin=0.1",
            "seed=42",
            "output_dir=out/x",
            "env.init_region.bounds=[-0.5, 0.5, 1.0, 1.2]",
        ])
        .unwrap();
        assert_eq!(c.train.episodes_total, 1);
        assert_eq!(c.train.actor_q_state, crate::lbac::ActorQState::Current);
        assert_eq!(c.train.hidden, vec![32, 32]);
        assert_eq!(c.env.tau_v, 0.0);
        assert_eq!(c.env.goal_center, [0.0, 0.6]);
        assert!(!c.validate.deterministic);
        assert_eq!(c.qp.margin, 0.1);
        assert_eq!(c.seed, 42);
        assert_eq!(c.output_dir, PathBuf::from("out/x"));
        assert!(matches!(c.env.init_region, InitRegion::Box { bounds } if bounds.y_min == 1.0));
    }

    #[test]
    fn gamma_one_fails_validation() {
        let mut c = RunConfig::default();
        c.apply_override("train.gamma=1.0").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
