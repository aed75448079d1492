//! Critic and actor objectives with their reverse-mode gradients.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env2d::{Action, EnvConfig};
use crate::error::{Error, Result};
use crate::lbac::transition::{Batch, Transition};
use crate::lbac::{ActorQState, TrainConfig};
use crate::net::{critic_forward, policy_sample, CriticBatch, Gradients, NetParams, PolicyBatch};

/// Constants shared by the loss functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub gamma: f64,
    pub terminal_cost: f64,
    pub alpha4: f64,
    pub c_hat: f64,
    pub entropy_target: f64,
    pub action_bound: [f64; 2],
    pub actor_q_state: ActorQState,
}

impl LossSettings {
    pub fn new(train: &TrainConfig, env: &EnvConfig) -> Self {
        Self {
            gamma: train.gamma,
            terminal_cost: env.terminal_cost,
            alpha4: train.alpha4,
            c_hat: train.c_hat,
            entropy_target: train.entropy_target,
            action_bound: env.action_bound,
            actor_q_state: train.actor_q_state,
        }
    }

    pub fn ceiling(&self) -> f64 {
        self.terminal_cost / (1.0 - self.gamma)
    }

    /// Decrease margin `alpha4 * c_hat`.
    pub fn margin(&self) -> f64 {
        self.alpha4 * self.c_hat
    }
}

/// Reparameterization noise for one minibatch: one draw at `s` and one at `s'`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchNoise {
    pub at_state: Vec<[f64; 2]>,
    pub at_next: Vec<[f64; 2]>,
}

impl BatchNoise {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Self {
        let mut b = Self::default();
        b.resample(rng, n);
        b
    }

    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R, n: usize) {
        let mut draw = |v: &mut Vec<[f64; 2]>| {
            v.clear();
            v.extend((0..n).map(|_| [StandardNormal.sample(rng), StandardNormal.sample(rng)]));
        };
        draw(&mut self.at_state);
        draw(&mut self.at_next);
    }
}

/// `c + gamma * q_next`, clipped to `[0, ceiling]`.
pub fn bellman_target(c: f64, q_next: f64, gamma: f64, ceiling: f64) -> f64 {
    (c + gamma * q_next).clamp(0.0, ceiling)
}

/// Target for one stored tuple using the target critic and a policy sample at `s'`.
pub fn q_target(
    t: &Transition,
    phi_target: &NetParams,
    theta: &NetParams,
    eps: [f64; 2],
    settings: &LossSettings,
) -> Result<f64> {
    let a_next = policy_sample(theta, &t.s_next, eps, settings.action_bound)?.action;
    let q_next = critic_forward(phi_target, &t.s_next, &a_next)?;
    Ok(bellman_target(t.c, q_next, settings.gamma, settings.ceiling()))
}

/// Per-sample critic objective
/// `0.5 (q - y)^2 + lambda (q_next ind_next - q ind + margin)`.
pub fn critic_objective_terms(
    q: f64,
    target: f64,
    q_next: f64,
    ind: f64,
    ind_next: f64,
    lambda: f64,
    margin: f64,
) -> f64 {
    let e = q - target;
    0.5 * e * e + lambda * (q_next * ind_next - q * ind + margin)
}

/// Reusable evaluation buffers for the loss functions.
#[derive(Debug, Clone, Default)]
pub struct LossWorkspace {
    policy_next: PolicyBatch,
    policy_state: PolicyBatch,
    critic_sa: CriticBatch,
    critic_next: CriticBatch,
    targets: Vec<f64>,
    d_q: Vec<f64>,
    d_q_next: Vec<f64>,
    d_actions: Vec<[f64; 2]>,
    d_actions_zero: Vec<[f64; 2]>,
    d_log_prob: Vec<f64>,
    next_actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticOutput {
    pub loss: f64,
    pub mse: f64,
    /// Batch mean of `q_next ind_next - (q - margin) ind`.
    pub lambda_stat: f64,
    pub mean_q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorOutput {
    pub objective: f64,
    /// Batch mean of `log pi(f(eps, s) | s)`.
    pub mean_log_prob: f64,
}

fn check_batch(batch: &Batch, noise: &BatchNoise) -> Result<usize> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Shape("empty minibatch".into()));
    }
    if noise.at_state.len() != n || noise.at_next.len() != n {
        return Err(Error::Shape("noise does not match minibatch size".into()));
    }
    Ok(n)
}

/// Critic objective and its gradient with respect to `phi`, written to `grads`.
/// The Bellman target is held constant.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss(
    ws: &mut LossWorkspace,
    batch: &Batch,
    noise: &BatchNoise,
    phi: &NetParams,
    phi_target: &NetParams,
    theta: &NetParams,
    lambda: f64,
    settings: &LossSettings,
    grads: &mut Gradients,
) -> Result<CriticOutput> {
    let n = check_batch(batch, noise)?;
    let inv_n = 1.0 / n as f64;
    let margin = settings.margin();

    ws.policy_next
        .forward(theta, &batch.s_next, &noise.at_next, settings.action_bound)?;
    ws.next_actions.clear();
    ws.next_actions.extend_from_slice(&ws.policy_next.actions);

    let q_target_next = ws.critic_next.forward(phi_target, &batch.s_next, &ws.next_actions)?;
    ws.targets.clear();
    ws.targets.extend(
        batch
            .c
            .iter()
            .zip(q_target_next)
            .map(|(&c, &q)| bellman_target(c, q, settings.gamma, settings.ceiling())),
    );

    ws.critic_sa.forward(phi, &batch.s, &batch.a)?;
    ws.critic_next.forward(phi, &batch.s_next, &ws.next_actions)?;

    let mut loss = 0.0;
    let mut mse = 0.0;
    let mut lambda_stat = 0.0;
    let mut sum_q = 0.0;
    ws.d_q.clear();
    ws.d_q_next.clear();
    for k in 0..n {
        let q = ws.critic_sa.values[k];
        let qn = ws.critic_next.values[k];
        let (ind, ind_n) = (batch.ind_s[k], batch.ind_next[k]);
        let y = ws.targets[k];
        loss += critic_objective_terms(q, y, qn, ind, ind_n, lambda, margin);
        mse += 0.5 * (q - y) * (q - y);
        lambda_stat += qn * ind_n - (q - margin) * ind;
        sum_q += q;
        ws.d_q.push((q - y - lambda * ind) * inv_n);
        ws.d_q_next.push(lambda * ind_n * inv_n);
    }
    let out = CriticOutput {
        loss: loss * inv_n,
        mse: mse * inv_n,
        lambda_stat: lambda_stat * inv_n,
        mean_q: sum_q * inv_n,
    };
    if !out.loss.is_finite() {
        return Err(Error::NonFinite {
            what: "critic loss".into(),
        });
    }

    grads.fill_zero();
    ws.critic_sa.backward(phi, &ws.d_q, Some(grads), None)?;
    if lambda != 0.0 {
        ws.critic_next.backward(phi, &ws.d_q_next, Some(grads), None)?;
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            what: "critic gradient".into(),
        });
    }
    Ok(out)
}

/// Actor objective
/// `mean[ Q(x, f(eps_x, x)) + beta (log pi(f(eps, s) | s) + H_t) ]`
/// with `x = s'` or `x = s` per `settings.actor_q_state`, and its gradient
/// with respect to `theta`, written to `grads`.
#[allow(clippy::too_many_arguments)]
pub fn actor_update(
    ws: &mut LossWorkspace,
    batch: &Batch,
    noise: &BatchNoise,
    theta: &NetParams,
    phi: &NetParams,
    beta: f64,
    settings: &LossSettings,
    grads: &mut Gradients,
) -> Result<ActorOutput> {
    let n = check_batch(batch, noise)?;
    let inv_n = 1.0 / n as f64;
    let bound = settings.action_bound;

    ws.policy_state.forward(theta, &batch.s, &noise.at_state, bound)?;
    let (q_states, q_policy) = match settings.actor_q_state {
        ActorQState::Current => (&batch.s, &mut ws.policy_state),
        ActorQState::Next => {
            ws.policy_next.forward(theta, &batch.s_next, &noise.at_next, bound)?;
            (&batch.s_next, &mut ws.policy_next)
        }
    };
    let q = ws.critic_sa.forward(phi, q_states, &q_policy.actions)?;
    let q_mean = q.iter().sum::<f64>() * inv_n;
    let mean_log_prob = ws.policy_state.log_probs.iter().sum::<f64>() * inv_n;
    let objective = q_mean + beta * (mean_log_prob + settings.entropy_target);
    if !objective.is_finite() {
        return Err(Error::NonFinite {
            what: "actor objective".into(),
        });
    }

    ws.d_q.clear();
    ws.d_q.resize(n, inv_n);
    ws.critic_sa.backward(phi, &ws.d_q, None, Some(&mut ws.d_actions))?;
    ws.d_log_prob.clear();
    ws.d_log_prob.resize(n, beta * inv_n);

    grads.fill_zero();
    match settings.actor_q_state {
        ActorQState::Current => {
            ws.policy_state
                .backward(theta, &ws.d_actions, &ws.d_log_prob, grads)?;
        }
        ActorQState::Next => {
            ws.d_actions_zero.clear();
            ws.d_actions_zero.resize(n, [0.0; 2]);
            ws.d_q_next.clear();
            ws.d_q_next.resize(n, 0.0);
            ws.policy_next.backward(theta, &ws.d_actions, &ws.d_q_next, grads)?;
            ws.policy_state
                .backward(theta, &ws.d_actions_zero, &ws.d_log_prob, grads)?;
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            what: "actor gradient".into(),
        });
    }
    Ok(ActorOutput {
        objective,
        mean_log_prob,
    })
}
