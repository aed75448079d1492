//! Numerical certification of a trained policy/critic pair: the terminal-cost
//! lower bound, the sampled decrease condition, level separation at `c_hat`,
//! contour extraction and evaluation rollouts.

pub mod contour;
pub mod decrease;
pub mod rollout;

use serde::{Deserialize, Serialize};

use crate::env2d::{Action, EnvConfig, State};
use crate::error::{Error, Result};
use crate::net::{critic_forward, mean_action, policy_forward, policy_sample, NetParams};

pub use contour::{export_contour, ContourTable, GridSpec, Segment};
pub use decrease::{
    check_decrease, check_level_separation, evaluate_decrease, level_separation_from,
    value_thirds, LevelSeparationReport, PoolSample, SamplePlan, TheoremReport,
};
pub use rollout::{rollout, rollout_eval, RolloutSummary, StepLog, Trajectory, TRAJECTORY_CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub c_max: f64,
    pub gamma: f64,
    pub n: usize,
    pub min_c: f64,
    pub configured_c: f64,
    pub satisfied: bool,
}

/// Largest cost over a `resolution x resolution` position grid spanning the
/// state box, at rest.
pub fn estimate_c_max<F: Fn(&State) -> f64>(cost: F, cfg: &EnvConfig, resolution: usize) -> f64 {
    let n = resolution.max(2);
    let (lb, ub) = (cfg.state_lb, cfg.state_ub);
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let x = lb[0] + (ub[0] - lb[0]) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let y = lb[1] + (ub[1] - lb[1]) * j as f64 / (n - 1) as f64;
            best = best.max(cost(&State::at(x, y)));
        }
    }
    best
}

/// `c_max (1 - gamma^N) / gamma^N` against the configured terminal cost.
pub fn lemma1_min_c(c_max: f64, gamma: f64, n: usize, configured_c: f64) -> Result<Lemma1Report> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if n == 0 {
        return Err(Error::Config("horizon must be at least one step".into()));
    }
    let g_n = gamma.powi(n as i32);
    let min_c = c_max * (1.0 - g_n) / g_n;
    Ok(Lemma1Report {
        c_max,
        gamma,
        n,
        min_c,
        configured_c,
        satisfied: configured_c > min_c,
    })
}

/// Policy and value access used by every certification routine.
pub trait Certified {
    /// Deterministic action at `s`.
    fn action(&self, s: &State) -> Result<Action>;
    /// `V(s)`.
    fn value(&self, s: &State) -> Result<f64>;
    /// Action for reparameterization noise `eps`; deterministic controllers
    /// ignore the noise.
    fn sample_action(&self, s: &State, _eps: [f64; 2]) -> Result<Action> {
        self.action(s)
    }
}

/// Trained policy and critic parameters; `V(s) = Q(s, mean action)`.
#[derive(Debug, Clone, Copy)]
pub struct LearnedArtifacts<'a> {
    pub theta: &'a NetParams,
    pub phi: &'a NetParams,
    pub action_bound: [f64; 2],
}

impl Certified for LearnedArtifacts<'_> {
    fn action(&self, s: &State) -> Result<Action> {
        Ok(mean_action(&policy_forward(self.theta, s)?, self.action_bound))
    }

    fn value(&self, s: &State) -> Result<f64> {
        critic_forward(self.phi, s, &self.action(s)?)
    }

    fn sample_action(&self, s: &State, eps: [f64; 2]) -> Result<Action> {
        Ok(policy_sample(self.theta, s, eps, self.action_bound)?.action)
    }
}
