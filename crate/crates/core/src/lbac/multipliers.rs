//! Lagrange multipliers for the decrease and entropy constraints.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lbac::losses::{critic_loss, BatchNoise, LossSettings, LossWorkspace};
use crate::lbac::transition::Batch;
use crate::net::{FlatParams, Gradients, NetParams, PolicyBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Multipliers {
    pub lambda: f64,
    pub beta: f64,
}

impl Multipliers {
    pub fn new(lambda: f64, beta: f64) -> Self {
        Self {
            lambda: lambda.max(0.0),
            beta: beta.max(0.0),
        }
    }

    /// Projected ascent step on both multipliers.
    pub fn ascend(&mut self, stats: &MultiplierStats, lr: f64) {
        self.lambda = (self.lambda + lr * stats.lambda_stat).max(0.0);
        self.beta = (self.beta + lr * stats.beta_stat).max(0.0);
    }

    /// Multiplier objectives `lambda * stat_lambda + beta * stat_beta`; their
    /// partial derivatives are the batch statistics.
    pub fn objective(&self, stats: &MultiplierStats) -> f64 {
        self.lambda * stats.lambda_stat + self.beta * stats.beta_stat
    }
}

impl FlatParams for Multipliers {
    fn num_params(&self) -> usize {
        2
    }

    fn param(&self, i: usize) -> f64 {
        [self.lambda, self.beta][i]
    }

    fn set_param(&mut self, i: usize, value: f64) {
        match i {
            0 => self.lambda = value,
            1 => self.beta = value,
            _ => panic!("multiplier index out of range"),
        }
    }
}

/// Ascent directions of the two multiplier objectives on one minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MultiplierStats {
    /// Mean of `Q(s', f(eps, s')) 1(s') - (Q(s, a) - alpha4 c_hat) 1(s)`.
    pub lambda_stat: f64,
    /// Mean of `log pi(f(eps, s) | s) + H_t`.
    pub beta_stat: f64,
}

pub fn multiplier_statistics(
    ws: &mut LossWorkspace,
    batch: &Batch,
    noise: &BatchNoise,
    theta: &NetParams,
    phi: &NetParams,
    settings: &LossSettings,
) -> Result<MultiplierStats> {
    // The critic pass evaluates every term of the lambda statistic; its
    // target network argument does not enter the statistic.
    let mut scratch = Gradients::zeros_like(phi);
    let critic = critic_loss(ws, batch, noise, phi, phi, theta, 0.0, settings, &mut scratch)?;
    let mut pb = PolicyBatch::default();
    pb.forward(theta, &batch.s, &noise.at_state, settings.action_bound)?;
    let mean_lp = pb.log_probs.iter().sum::<f64>() / batch.len() as f64;
    Ok(MultiplierStats {
        lambda_stat: critic.lambda_stat,
        beta_stat: mean_lp + settings.entropy_target,
    })
}

/// Evaluates the statistics on `batch` and takes one projected ascent step.
#[allow(clippy::too_many_arguments)]
pub fn update_multipliers(
    ws: &mut LossWorkspace,
    batch: &Batch,
    noise: &BatchNoise,
    multipliers: Multipliers,
    theta: &NetParams,
    phi: &NetParams,
    settings: &LossSettings,
    lr: f64,
) -> Result<Multipliers> {
    let stats = multiplier_statistics(ws, batch, noise, theta, phi, settings)?;
    let mut m = multipliers;
    m.ascend(&stats, lr);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::grad_check;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_clamps_at_zero() {
        let mut m = Multipliers::new(0.1, 0.0);
        m.ascend(&MultiplierStats { lambda_stat: -5.0, beta_stat: 0.0 }, 0.1);
        assert_eq!(m.lambda, 0.0);
    }

    #[test]
    fn zero_statistics_leave_multipliers_unchanged() {
        let mut m = Multipliers::new(0.3, 1.7);
        m.ascend(&MultiplierStats::default(), 0.5);
        assert_eq!(m, Multipliers::new(0.3, 1.7));
    }

    #[test]
    fn hand_computed_ascent() {
        let mut m = Multipliers::new(1.0, 0.0);
        m.ascend(&MultiplierStats { lambda_stat: 0.25, beta_stat: 0.0 }, 0.1);
        assert!((m.lambda - 1.025).abs() < 1e-15);
    }

    #[test]
    fn objective_gradient_is_the_statistic() {
        let stats = MultiplierStats {
            lambda_stat: -0.37,
            beta_stat: 1.3,
        };
        let m = Multipliers::new(0.8, 0.2);
        let f = |p: &Multipliers| Ok(p.objective(&stats));
        let r = grad_check(
            f,
            &m,
            &[stats.lambda_stat, stats.beta_stat],
            2,
            1e-5,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-9);
    }

    proptest! {
        #[test]
        fn multipliers_stay_nonnegative(
            l0 in 0.0f64..5.0, b0 in 0.0f64..5.0,
            steps in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..200),
            lr in 1e-5f64..1.0,
        ) {
            let mut m = Multipliers::new(l0, b0);
            for (a, b) in steps {
                m.ascend(&MultiplierStats { lambda_stat: a, beta_stat: b }, lr);
                prop_assert!(m.lambda >= 0.0 && m.beta >= 0.0);
            }
        }
    }
}
