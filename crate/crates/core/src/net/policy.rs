//! Tanh-squashed Gaussian policy head.
//!
//! The network maps a state to `[mean_x, mean_y, log_std_x, log_std_y]`.
//! Actions are `bound * tanh(mean + exp(log_std) * eps)`.

use crate::env2d::{Action, State};
use crate::error::{Error, Result};
use crate::net::mlp::{backward_batch, forward_batch, BatchCache, Gradients, NetParams};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub action: Action,
    pub log_prob: f64,
    pub noise: [f64; 2],
}

/// `ln(1 - tanh(x)^2)` without cancellation for large `|x|`.
pub fn log_one_minus_tanh_sq(x: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x))
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_policy_shape(theta: &NetParams) -> Result<()> {
    if theta.input_dim() != State::DIM || theta.output_dim() != 4 {
        return Err(Error::Shape(format!(
            "policy network must map 4 -> 4, got {:?}",
            theta.layer_dims()
        )));
    }
    Ok(())
}

fn head(raw: &[f64]) -> PolicyOutput {
    PolicyOutput {
        mean: [raw[0], raw[1]],
        log_std: [
            raw[2].clamp(LOG_STD_MIN, LOG_STD_MAX),
            raw[3].clamp(LOG_STD_MIN, LOG_STD_MAX),
        ],
    }
}

pub fn policy_forward(theta: &NetParams, s: &State) -> Result<PolicyOutput> {
    check_policy_shape(theta)?;
    let mut cache = BatchCache::default();
    let out = forward_batch(theta, &s.to_array(), 1, &mut cache)?;
    Ok(head(out))
}

/// Deterministic action `bound * tanh(mean)`.
pub fn mean_action(out: &PolicyOutput, bound: [f64; 2]) -> Action {
    Action::new(bound[0] * out.mean[0].tanh(), bound[1] * out.mean[1].tanh())
}

/// Reparameterized sample and its squashed-Gaussian log density.
pub fn squash(out: &PolicyOutput, eps: [f64; 2], bound: [f64; 2]) -> SampledAction {
    let mut a = [0.0; 2];
    let mut log_prob = 0.0;
    for i in 0..2 {
        let std = out.log_std[i].exp();
        let raw = out.mean[i] + std * eps[i];
        a[i] = bound[i] * raw.tanh();
        log_prob += -0.5 * eps[i] * eps[i]
            - out.log_std[i]
            - HALF_LN_2PI
            - log_one_minus_tanh_sq(raw)
            - bound[i].ln();
    }
    SampledAction {
        action: Action::new(a[0], a[1]),
        log_prob,
        noise: eps,
    }
}

pub fn policy_sample(
    theta: &NetParams,
    s: &State,
    eps: [f64; 2],
    bound: [f64; 2],
) -> Result<SampledAction> {
    Ok(squash(&policy_forward(theta, s)?, eps, bound))
}

/// Per-element quantities kept for the reverse pass.
#[derive(Debug, Clone, Copy, Default)]
struct SampleTrace {
    tanh: [f64; 2],
    std_eps: [f64; 2],
    log_std_active: [bool; 2],
}

/// Batched reparameterized sampling with a reverse pass.
#[derive(Debug, Clone, Default)]
pub struct PolicyBatch {
    cache: BatchCache,
    input: Vec<f64>,
    traces: Vec<SampleTrace>,
    d_out: Vec<f64>,
    bound: [f64; 2],
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
}

impl PolicyBatch {
    pub fn forward(
        &mut self,
        theta: &NetParams,
        states: &[State],
        noise: &[[f64; 2]],
        bound: [f64; 2],
    ) -> Result<()> {
        check_policy_shape(theta)?;
        if states.len() != noise.len() {
            return Err(Error::Shape("states and noise differ in length".into()));
        }
        self.bound = bound;
        self.input.clear();
        self.input.extend(states.iter().flat_map(|s| s.to_array()));
        let raw = forward_batch(theta, &self.input, states.len(), &mut self.cache)?;
        self.actions.clear();
        self.log_probs.clear();
        self.traces.clear();
        for (row, eps) in raw.chunks_exact(4).zip(noise) {
            let out = head(row);
            let sample = squash(&out, *eps, bound);
            let mut tr = SampleTrace::default();
            for i in 0..2 {
                let std = out.log_std[i].exp();
                tr.tanh[i] = (out.mean[i] + std * eps[i]).tanh();
                tr.std_eps[i] = std * eps[i];
                tr.log_std_active[i] = (LOG_STD_MIN..=LOG_STD_MAX).contains(&row[2 + i]);
            }
            self.actions.push(sample.action);
            self.log_probs.push(sample.log_prob);
            self.traces.push(tr);
        }
        Ok(())
    }

    /// Accumulates `d/dtheta` of `sum_i d_action[i]·a_i + d_log_prob[i]·log_prob_i`
    /// into `grads`, with the noise held fixed.
    pub fn backward(
        &mut self,
        theta: &NetParams,
        d_action: &[[f64; 2]],
        d_log_prob: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        let n = self.traces.len();
        if d_action.len() != n || d_log_prob.len() != n {
            return Err(Error::Shape("policy gradient seeds do not match batch".into()));
        }
        self.d_out.clear();
        self.d_out.resize(n * 4, 0.0);
        for (k, tr) in self.traces.iter().enumerate() {
            for i in 0..2 {
                let u = tr.tanh[i];
                // d(raw) from the action path and from -ln(1 - tanh^2(raw)).
                let d_raw = d_action[k][i] * self.bound[i] * (1.0 - u * u) + d_log_prob[k] * 2.0 * u;
                self.d_out[k * 4 + i] = d_raw;
                if tr.log_std_active[i] {
                    self.d_out[k * 4 + 2 + i] = d_raw * tr.std_eps[i] - d_log_prob[k];
                }
            }
        }
        backward_batch(theta, &mut self.cache, &self.d_out, Some(grads), None)
    }
}
