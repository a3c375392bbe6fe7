//! Adam with bias correction and decoupled weight decay.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: after the Adam update `p ← p − lr·wd·p_prev`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Invalid(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Invalid("Adam betas must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 || self.eps <= 0.0 {
            return Err(Error::Invalid(
                "weight decay must be >= 0 and eps > 0".into(),
            ));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Array2<f64>]) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn matches(&self, params: &[Array2<f64>]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(&self.m)
                .zip(&self.v)
                .all(|((p, m), v)| p.dim() == m.dim() && p.dim() == v.dim())
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(
    params: &mut [Array2<f64>],
    grads: &[Array2<f64>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || !state.matches(params) {
        return Err(Error::Shape(
            "gradients or Adam moments do not match parameters".into(),
        ));
    }
    if let Some((i, _)) = params
        .iter()
        .zip(grads)
        .enumerate()
        .find(|(_, (p, g))| p.dim() != g.dim())
    {
        return Err(Error::Shape(format!("gradient {i} has the wrong shape")));
    }
    if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, lr, eps, wd) = (cfg.beta1, cfg.beta2, cfg.lr, cfg.eps, cfg.weight_decay);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let prev = *p;
            *p = prev - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * prev;
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_no_decay_is_fixed_point() {
        let mut p = vec![array![[1.0, -2.0]]];
        let g = vec![array![[0.0, 0.0]]];
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        }
        assert_eq!(p[0], array![[1.0, -2.0]]);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn first_step_matches_hand_oracle() {
        // m̂ = g and v̂ = g² after one step, so the move is lr·g/(|g|+eps)
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        let p0 = [0.3, -0.7, 2.0];
        let g = [0.5, -4.0, 1e-3];
        let mut p = vec![Array2::from_shape_vec((1, 3), p0.to_vec()).unwrap()];
        let grads = vec![Array2::from_shape_vec((1, 3), g.to_vec()).unwrap()];
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &grads, &mut s, &cfg).unwrap();
        for k in 0..3 {
            let m = (1.0 - 0.9) * g[k];
            let v = (1.0 - 0.999) * g[k] * g[k];
            let m_hat = m / (1.0 - 0.9);
            let v_hat = v / (1.0 - 0.999);
            let expect = p0[k] - 0.1 * m_hat / (v_hat.sqrt() + 1e-8) - 0.1 * 0.5 * p0[k];
            assert!((p[0][[0, k]] - expect).abs() < 1e-15);
            let sign_like = p0[k] - 0.1 * g[k] / (g[k].abs() + 1e-8) - 0.05 * p0[k];
            assert!((p[0][[0, k]] - sign_like).abs() < 1e-12);
        }
    }

    #[test]
    fn two_steps_match_replay() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let g = 0.25;
        let mut p = vec![array![[1.0]]];
        let grads = vec![array![[g]]];
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &grads, &mut s, &cfg).unwrap();
        adam_step(&mut p, &grads, &mut s, &cfg).unwrap();

        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x = x - 0.01 * mh / (vh.sqrt() + 1e-8) - 0.01 * 0.01 * x;
        }
        assert!((p[0][[0, 0]] - x).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![array![[1.0, 2.0]]];
        let mut s = AdamState::new(&p);
        let bad = vec![array![[1.0]]];
        assert!(adam_step(&mut p, &bad, &mut s, &AdamConfig::default()).is_err());
    }

    #[test]
    fn non_finite_gradient_is_numeric_error() {
        let mut p = vec![array![[1.0]]];
        let mut s = AdamState::new(&p);
        let bad = vec![array![[f64::NAN]]];
        let err = adam_step(&mut p, &bad, &mut s, &AdamConfig::default()).unwrap_err();
        assert!(err.is_numeric());
    }
}
