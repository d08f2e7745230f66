use alloc::format;

use crate::diffmath::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based).
///
/// All gradients are validated before any parameter is touched, so a
/// non-finite gradient leaves the set unchanged.
pub fn adam_step(params: &mut ParamSet, grads: &[Tensor], cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::Usage("Adam step index starts at 1".into()));
    }
    if grads.len() != params.len() {
        return Err(Error::dim("adam_step", &[params.len()], &[grads.len()]));
    }
    for (p, g) in params.iter().zip(grads) {
        if !p.value.same_shape(g) {
            return Err(Error::dim("adam_step", p.value.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient for `{}`",
                p.id
            )));
        }
    }
    let exp = i32::try_from(t).unwrap_or(i32::MAX);
    let c1 = 1.0 - libm::pow(cfg.beta1, f64::from(exp));
    let c2 = 1.0 - libm::pow(cfg.beta2, f64::from(exp));
    for (p, g) in params.iter_mut().zip(grads) {
        let m = p.first_moment.data_mut();
        let v = p.second_moment.data_mut();
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let gi = g.data()[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}

/// Adam with its own step counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        adam_step(params, grads, &self.config, self.step + 1)?;
        self.step += 1;
        Ok(())
    }
}
