use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Param, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter block, in enumeration order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<M: Parameters + ?Sized>(config: AdamConfig, model: &M) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Self::with_shapes(config, &shapes)
    }

    pub fn with_shapes(config: AdamConfig, lens: &[usize]) -> Self {
        AdamState {
            config,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step<M: Parameters + ?Sized>(&mut self, model: &mut M) -> Result<()> {
        adam_step(&mut model.params_mut(), self)
    }
}

/// One Adam update from the accumulated gradients. Nothing is modified if any
/// gradient is non-finite or a shape disagrees with the state.
pub fn adam_step(params: &mut [&mut Param], state: &mut AdamState) -> Result<()> {
    if params.len() != state.m.len() {
        return Err(Error::LengthMismatch(params.len(), state.m.len()));
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.grad.len() != m.len() || p.value.len() != m.len() {
            return Err(Error::shape("adam_step", m.len(), p.grad.len()));
        }
        if p.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    state.t += 1;
    let AdamConfig {
        alpha,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        for i in 0..m.len() {
            let g = p.grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p.value[i] -= alpha * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
