//! Nonnegative state-action critic: `Q(s, a) = softplus(net([s, a]))`.

use crate::env2d::{Action, State};
use crate::error::{Error, Result};
use crate::net::mlp::{backward_batch, forward_batch, BatchCache, Gradients, NetParams};
use crate::net::policy::{sigmoid, softplus};

pub const CRITIC_INPUT_DIM: usize = State::DIM + Action::DIM;

fn check_critic_shape(phi: &NetParams) -> Result<()> {
    if phi.input_dim() != CRITIC_INPUT_DIM || phi.output_dim() != 1 {
        return Err(Error::Shape(format!(
            "critic network must map 6 -> 1, got {:?}",
            phi.layer_dims()
        )));
    }
    Ok(())
}

fn write_input(buf: &mut Vec<f64>, s: &State, a: &Action) {
    buf.extend_from_slice(&s.to_array());
    buf.extend_from_slice(&a.to_array());
}

pub fn critic_forward(phi: &NetParams, s: &State, a: &Action) -> Result<f64> {
    check_critic_shape(phi)?;
    let mut input = Vec::with_capacity(CRITIC_INPUT_DIM);
    write_input(&mut input, s, a);
    let mut cache = BatchCache::default();
    let z = forward_batch(phi, &input, 1, &mut cache)?[0];
    Ok(softplus(z))
}

/// Batched critic evaluation with a reverse pass to parameters and actions.
#[derive(Debug, Clone, Default)]
pub struct CriticBatch {
    cache: BatchCache,
    input: Vec<f64>,
    logits: Vec<f64>,
    d_logits: Vec<f64>,
    d_input: Vec<f64>,
    pub values: Vec<f64>,
}

impl CriticBatch {
    pub fn forward(&mut self, phi: &NetParams, states: &[State], actions: &[Action]) -> Result<&[f64]> {
        check_critic_shape(phi)?;
        if states.len() != actions.len() {
            return Err(Error::Shape("states and actions differ in length".into()));
        }
        self.input.clear();
        for (s, a) in states.iter().zip(actions) {
            write_input(&mut self.input, s, a);
        }
        let z = forward_batch(phi, &self.input, states.len(), &mut self.cache)?;
        self.logits.clear();
        self.logits.extend_from_slice(z);
        self.values.clear();
        self.values.extend(self.logits.iter().map(|&z| softplus(z)));
        Ok(&self.values)
    }

    /// Back-propagates `d_values` (dL/dQ per element). Parameter gradients are
    /// accumulated into `grads`; dL/da is written to `d_actions` if given.
    pub fn backward(
        &mut self,
        phi: &NetParams,
        d_values: &[f64],
        grads: Option<&mut Gradients>,
        d_actions: Option<&mut Vec<[f64; 2]>>,
    ) -> Result<()> {
        if d_values.len() != self.logits.len() {
            return Err(Error::Shape("critic gradient seeds do not match batch".into()));
        }
        self.d_logits.clear();
        self.d_logits
            .extend(d_values.iter().zip(&self.logits).map(|(d, &z)| d * sigmoid(z)));
        let want_input = d_actions.is_some();
        backward_batch(
            phi,
            &mut self.cache,
            &self.d_logits,
            grads,
            want_input.then_some(&mut self.d_input),
        )?;
        if let Some(out) = d_actions {
            out.clear();
            out.extend(
                self.d_input
                    .chunks_exact(CRITIC_INPUT_DIM)
                    .map(|row| [row[State::DIM], row[State::DIM + 1]]),
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::mlp::FlatParams;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_gives_ln2() {
        let phi = NetParams::zeros(&[6, 8, 8, 1]).unwrap();
        let q = critic_forward(&phi, &State::new(1.0, 1.0, 0.1, 0.1), &Action::new(0.2, -0.2)).unwrap();
        assert!((q - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn large_output_bias_passes_through() {
        for b in [20.0, 35.0, 1e3] {
            let mut phi = NetParams::zeros(&[6, 4, 1]).unwrap();
            phi.biases_mut(1)[0] = b;
            let q = critic_forward(&phi, &State::default(), &Action::default()).unwrap();
            assert!(q - b < 1e-6 && q >= b);
        }
    }

    #[test]
    fn rejects_policy_shaped_params() {
        let p = NetParams::zeros(&[4, 8, 4]).unwrap();
        assert!(critic_forward(&p, &State::default(), &Action::default()).is_err());
    }

    #[test]
    fn action_gradient_matches_finite_differences() {
        let phi = NetParams::init(&[6, 12, 12, 1], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let s = [State::new(0.2, 0.9, 0.1, 0.0), State::new(1.4, 0.1, -0.2, 0.05)];
        let a = [Action::new(0.1, -0.05), Action::new(-0.2, 0.2)];
        let mut cb = CriticBatch::default();
        cb.forward(&phi, &s, &a).unwrap();
        let mut g = Gradients::zeros_like(&phi);
        let mut da = Vec::new();
        cb.backward(&phi, &[1.0, 1.0], Some(&mut g), Some(&mut da)).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            for i in 0..2 {
                let shift = |d: f64| {
                    let mut ak = a[k].to_array();
                    ak[i] += d;
                    critic_forward(&phi, &s[k], &Action::new(ak[0], ak[1])).unwrap()
                };
                let fd = (shift(h) - shift(-h)) / (2.0 * h);
                assert!((fd - da[k][i]).abs() < 1e-8);
            }
        }
        let flat = g.to_flat();
        for i in (0..phi.num_params()).step_by(7) {
            let total = |q: &NetParams| {
                (0..2).map(|k| critic_forward(q, &s[k], &a[k]).unwrap()).sum::<f64>()
            };
            let mut plus = phi.clone();
            plus.set_param(i, phi.param(i) + h);
            let mut minus = phi.clone();
            minus.set_param(i, phi.param(i) - h);
            let fd = (total(&plus) - total(&minus)) / (2.0 * h);
            assert!((fd - flat[i]).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn critic_is_nonnegative(seed in 0u64..500, px in -1.0f64..2.0, py in 0.0f64..1.8,
                                 ax in -0.25f64..0.25, ay in -0.25f64..0.25, scale in 0.1f64..50.0) {
            let mut phi = NetParams::init(&[6, 8, 8, 1], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for s in phi.slices_mut() {
                s.iter_mut().for_each(|v| *v *= scale);
            }
            let q = critic_forward(&phi, &State::at(px, py), &Action::new(ax, ay)).unwrap();
            prop_assert!(q >= 0.0);
        }
    }
}
