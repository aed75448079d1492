//! Lyapunov barrier actor-critic training.

pub mod losses;
pub mod multipliers;
pub mod optim;
pub mod trainer;
pub mod transition;

use serde::{Deserialize, Serialize};

use crate::clbf_validate::{estimate_c_max, lemma1_min_c, Lemma1Report};
use crate::env2d::NavEnv;
use crate::error::{Error, Result};

pub use losses::{
    actor_update, bellman_target, critic_loss, critic_objective_terms, q_target, ActorOutput,
    BatchNoise, CriticOutput, LossSettings, LossWorkspace,
};
pub use multipliers::{multiplier_statistics, update_multipliers, MultiplierStats, Multipliers};
pub use optim::{polyak, polyak_in_place, Adam};
pub use trainer::{
    metrics_csv, train, EpisodeMetrics, Learner, NoCallbacks, Phase, TrainCallbacks, TrainOutcome,
    METRICS_CSV_HEADER,
};
pub use transition::{rewrite_tuple, Batch, ReplayBuffer, Transition, TransitionKind};

/// Which state the Lyapunov term of the actor objective is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorQState {
    /// `Q(s', f(eps, s'))`, the policy-gradient form.
    Next,
    /// `Q(s, f(eps, s))`, the surrogate-objective form.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_multiplier: f64,
    pub batch: usize,
    pub episodes_total: usize,
    pub warm_start_episodes: usize,
    pub grad_steps_per_episode: usize,
    /// Level `c_hat` separating safe from unsafe critic values.
    pub c_hat: f64,
    pub alpha4: f64,
    pub entropy_target: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub actor_q_state: ActorQState,
    pub initial_lambda: f64,
    pub initial_beta: f64,
    /// Run the decrease-condition stopping check every this many episodes
    /// after warm start; 0 disables it.
    pub stop_check_every: usize,
    pub stop_check_rollouts: usize,
    /// Minimum stored transitions before gradient steps start.
    pub learning_starts: usize,
    /// Grid points per axis for the `c_max` estimate of the startup check.
    pub c_max_resolution: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.999,
            tau: 0.005,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_multiplier: 3e-4,
            batch: 512,
            episodes_total: 2500,
            warm_start_episodes: 500,
            grad_steps_per_episode: 200,
            c_hat: 2000.0,
            alpha4: 1e-3,
            entropy_target: -2.0,
            buffer_capacity: 1_000_000,
            hidden: vec![256, 256],
            actor_q_state: ActorQState::Next,
            initial_lambda: 1.0,
            initial_beta: 1.0,
            stop_check_every: 50,
            stop_check_rollouts: 30,
            learning_starts: 512,
            c_max_resolution: 1000,
        }
    }
}

impl TrainConfig {
    /// Field checks plus the terminal-cost lower bound for the environment.
    pub fn validate(&self, env: &NavEnv) -> Result<Lemma1Report> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("train.gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("train.tau must lie in [0, 1], got {}", self.tau));
        }
        for (name, lr) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_multiplier", self.lr_multiplier),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("train.{name} must be positive, got {lr}"));
            }
        }
        if self.batch == 0 || self.buffer_capacity == 0 {
            return bad("train.batch and train.buffer_capacity must be positive".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("train.hidden must list positive layer widths".into());
        }
        if self.initial_lambda < 0.0 || self.initial_beta < 0.0 {
            return bad("initial multipliers must be nonnegative".into());
        }
        if self.stop_check_every > 0 && self.stop_check_rollouts < 30 {
            return bad("train.stop_check_rollouts must be at least 30".into());
        }
        if !(self.c_hat > 0.0) || self.alpha4 < 0.0 {
            return bad("train.c_hat must be positive and train.alpha4 nonnegative".into());
        }
        let c_max = estimate_c_max(|s| env.cost(s), env.config(), self.c_max_resolution.max(2));
        let report = lemma1_min_c(
            c_max,
            self.gamma,
            env.config().max_steps,
            env.config().terminal_cost,
        )?;
        if !report.satisfied {
            return bad(format!(
                "terminal cost {} does not exceed the lower bound {}",
                report.configured_c, report.min_c
            ));
        }
        Ok(report)
    }

    pub fn policy_dims(&self) -> Vec<usize> {
        let mut d = vec![4];
        d.extend(&self.hidden);
        d.push(4);
        d
    }

    pub fn critic_dims(&self) -> Vec<usize> {
        let mut d = vec![6];
        d.extend(&self.hidden);
        d.push(1);
        d
    }

    /// Analytic ceiling `C / (1 - gamma)` of the unsafe self-loop recursion.
    pub fn target_ceiling(&self, terminal_cost: f64) -> f64 {
        terminal_cost / (1.0 - self.gamma)
    }
}
