//! Checkpoint sets: policy, critic and target critic as versioned JSON plus a
//! sidecar with the multipliers, the episode count and the config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbac::{Learner, Multipliers};
use crate::net::NetParams;

pub const POLICY_FILE: &str = "policy.json";
pub const CRITIC_FILE: &str = "critic.json";
pub const TARGET_FILE: &str = "critic_target.json";
pub const SIDECAR_FILE: &str = "state.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub multipliers: Multipliers,
    /// Completed episodes.
    pub episode: usize,
    pub cfg_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSet {
    pub theta: NetParams,
    pub phi: NetParams,
    pub phi_target: NetParams,
    pub sidecar: Sidecar,
}

impl CheckpointSet {
    pub fn from_learner(l: &Learner, episode: usize, cfg_hash: &str) -> Self {
        Self {
            theta: l.theta().clone(),
            phi: l.phi().clone(),
            phi_target: l.phi_target().clone(),
            sidecar: Sidecar {
                multipliers: l.multipliers(),
                episode,
                cfg_hash: cfg_hash.to_string(),
            },
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(POLICY_FILE), self.theta.to_json())?;
        std::fs::write(dir.join(CRITIC_FILE), self.phi.to_json())?;
        std::fs::write(dir.join(TARGET_FILE), self.phi_target.to_json())?;
        std::fs::write(dir.join(SIDECAR_FILE), serde_json::to_string_pretty(&self.sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", dir.join(name).display())))
        };
        let net = |name: &str| {
            NetParams::from_json(&read(name)?).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
        };
        let set = Self {
            theta: net(POLICY_FILE)?,
            phi: net(CRITIC_FILE)?,
            phi_target: net(TARGET_FILE)?,
            sidecar: serde_json::from_str(&read(SIDECAR_FILE)?)
                .map_err(|e| Error::Checkpoint(format!("{SIDECAR_FILE}: {e}")))?,
        };
        set.check_shapes()?;
        Ok(set)
    }

    fn check_shapes(&self) -> Result<()> {
        let ends = |p: &NetParams| (p.input_dim(), p.output_dim());
        if ends(&self.theta) != (4, 4) {
            return Err(Error::Checkpoint(format!("policy must map 4 -> 4, got {:?}", self.theta.layer_dims())));
        }
        if ends(&self.phi) != (6, 1) || !self.phi.same_shape(&self.phi_target) {
            return Err(Error::Checkpoint("critic and target must map 6 -> 1 with equal shapes".into()));
        }
        if !(self.theta.is_finite() && self.phi.is_finite() && self.phi_target.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(())
    }
}

/// Directory of the set written after `episode` completed episodes.
pub fn checkpoint_dir(output_dir: &Path, episode: usize) -> PathBuf {
    output_dir.join("checkpoints").join(format!("ep_{episode:06}"))
}

/// All checkpoint directories under `output_dir`, by episode.
pub fn list_checkpoints(output_dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let root = output_dir.join("checkpoints");
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(ep) = name.to_str().and_then(|n| n.strip_prefix("ep_")).and_then(|n| n.parse().ok()) {
            out.push((ep, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env2d::{EnvConfig, NavEnv};
    use crate::lbac::TrainConfig;

    fn learner() -> Learner {
        let env = NavEnv::new(EnvConfig::default()).unwrap();
        let cfg = TrainConfig {
            hidden: vec![8, 8],
            ..TrainConfig::default()
        };
        Learner::new(&env, &cfg, 3).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let set = CheckpointSet::from_learner(&learner(), 100, "abc");
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        set.save(&a).unwrap();
        let loaded = CheckpointSet::load(&a).unwrap();
        assert_eq!(loaded, set);
        loaded.save(&b).unwrap();
        for f in [POLICY_FILE, CRITIC_FILE, TARGET_FILE, SIDECAR_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
    }

    #[test]
    fn corrupt_or_mismatched_sets_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = CheckpointSet::from_learner(&learner(), 1, "h");
        set.save(dir.path()).unwrap();
        std::fs::write(dir.path().join(CRITIC_FILE), "{").unwrap();
        assert!(matches!(CheckpointSet::load(dir.path()), Err(Error::Checkpoint(_))));
        std::fs::remove_file(dir.path().join(CRITIC_FILE)).unwrap();
        assert!(matches!(CheckpointSet::load(dir.path()), Err(Error::Checkpoint(_))));
        set.phi = set.theta.clone();
        set.save(dir.path()).unwrap();
        assert!(matches!(CheckpointSet::load(dir.path()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn listing_is_sorted_by_episode() {
        let dir = tempfile::tempdir().unwrap();
        let set = CheckpointSet::from_learner(&learner(), 1, "h");
        for ep in [200, 100, 1000] {
            set.save(&checkpoint_dir(dir.path(), ep)).unwrap();
        }
        let eps: Vec<usize> = list_checkpoints(dir.path()).unwrap().iter().map(|e| e.0).collect();
        assert_eq!(eps, vec![100, 200, 1000]);
    }
}
