use crate::error::{Error, Result};
use crate::net::{Gradients, NetParams};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(params: &NetParams, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Descent step `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut NetParams, grads: &Gradients) -> Result<()> {
        if !grads.shape_matches(params) || !self.m.shape_matches(params) {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .slices_mut()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `tau * source + (1 - tau) * target`, elementwise.
pub fn polyak(target: &NetParams, source: &NetParams, tau: f64) -> Result<NetParams> {
    let mut out = target.clone();
    polyak_in_place(&mut out, source, tau)?;
    Ok(out)
}

pub fn polyak_in_place(target: &mut NetParams, source: &NetParams, tau: f64) -> Result<()> {
    if !target.same_shape(source) {
        return Err(Error::Shape("polyak averaging of differently shaped networks".into()));
    }
    for (t, s) in target.slices_mut().zip(source.slices()) {
        t.iter_mut().zip(s).for_each(|(t, s)| *t = tau * s + (1.0 - tau) * *t);
    }
    Ok(())
}
