//! AdamW with decoupled weight decay.
//!
//! ```text
//! m = β1·m + (1-β1)·g
//! v = β2·v + (1-β2)·g²
//! θ = θ - lr·(m̂/(√v̂ + ε) + λ·θ)      λ = 0 for biases and layer-norm vectors
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::decays;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Moment estimates per named tensor plus the shared step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamWState {
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamWState {
    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One AdamW update over named tensors. `grads` must list the same names in
/// the same order. Nothing is modified if any gradient is non-finite.
pub fn adamw_step(
    params: &mut [(String, &mut [f64])],
    grads: &[(&str, &[f64])],
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Mismatch("parameter and gradient lists differ".into()));
    }
    for ((name, p), (gname, g)) in params.iter().zip(grads) {
        if name != gname || p.len() != g.len() {
            return Err(Error::Mismatch(format!("gradient for `{name}` does not match")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.clone()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((name, p), (_, g)) in params.iter_mut().zip(grads) {
        let mom = state.moments.entry(name.clone()).or_insert_with(|| Moments {
            m: vec![0.0; p.len()],
            v: vec![0.0; p.len()],
        });
        let wd = if decays(name) { cfg.weight_decay } else { 0.0 };
        for i in 0..p.len() {
            let gi = g[i];
            let m = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * gi;
            let v = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * gi * gi;
            mom.m[i] = m;
            mom.v[i] = v;
            let update = (m / bc1) / ((v / bc2).sqrt() + cfg.eps) + wd * p[i];
            p[i] -= lr * update;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(name: &str, theta: f64, g: f64, lr: f64, cfg: &AdamWConfig, state: &mut AdamWState) -> f64 {
        let mut value = [theta];
        let grad = [g];
        let mut params = vec![(name.to_string(), &mut value[..])];
        adamw_step(&mut params, &[(name, &grad[..])], state, lr, cfg).unwrap();
        value[0]
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut s = AdamWState::default();
        assert_eq!(step_scalar("x.w1", 0.7, 0.0, 0.1, &cfg, &mut s), 0.7);
    }

    #[test]
    fn pure_decay_term() {
        let cfg = AdamWConfig::default();
        let mut s = AdamWState::default();
        let theta = step_scalar("x.w1", 1.0, 0.0, 0.1, &cfg, &mut s);
        assert!((theta - 0.999).abs() < 1e-15);
        // biases are not decayed
        let mut s = AdamWState::default();
        assert_eq!(step_scalar("x.b1", 1.0, 0.0, 0.1, &cfg, &mut s), 1.0);
    }

    #[test]
    fn first_step_is_sign_like() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        for g in [3.0, -0.02, 1e-3] {
            let mut s = AdamWState::default();
            let theta = step_scalar("x.w2", 0.0, g, 0.01, &cfg, &mut s);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((theta - expected).abs() < 1e-12, "{theta} vs {expected}");
        }
    }

    #[test]
    fn zero_lr_is_noop() {
        let cfg = AdamWConfig::default();
        let mut s = AdamWState::default();
        let mut theta = 0.3;
        for g in [1.0, -4.0, 0.5] {
            theta = step_scalar("x.w1", theta, g, 0.0, &cfg, &mut s);
        }
        assert_eq!(theta, 0.3);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut a = [1.0, 2.0];
        let mut params = vec![("hsc.w2".to_string(), &mut a[..])];
        let g = [0.0, f64::NAN];
        let err = adamw_step(&mut params, &[("hsc.w2", &g[..])], &mut AdamWState::default(), 0.1, &AdamWConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("hsc.w2"));
        assert_eq!(a, [1.0, 2.0]);
    }
}
