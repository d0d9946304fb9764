use rand::Rng;

use super::conv::{axpy, dot};
use super::he_init;
use crate::error::{Error, Result};
use crate::params::{Param, Parameters};

/// Fully connected layer, `y = W x + b` with `W` stored `out x in` row-major.
#[derive(Clone, Debug)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    pub weight: Param,
    pub bias: Param,
}

#[derive(Clone, Debug, Default)]
pub struct DenseCache {
    input: Option<Vec<f64>>,
}

impl Dense {
    pub fn new(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weight: Param::zeros(format!("{name}.weight"), in_dim * out_dim),
            bias: Param::zeros(format!("{name}.bias"), out_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.weight.value = he_init(self.weight.len(), self.in_dim, rng);
        self.bias.value.fill(0.0);
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::shape("dense_forward", self.in_dim, x.len()));
        }
        Ok((0..self.out_dim)
            .map(|o| self.bias.value[o] + dot(&self.weight.value[o * self.in_dim..(o + 1) * self.in_dim], x))
            .collect())
    }

    pub fn forward(&self, x: &[f64], cache: &mut DenseCache) -> Result<Vec<f64>> {
        let y = self.apply(x)?;
        cache.input = Some(x.to_vec());
        Ok(y)
    }

    /// Accumulates `W`/`b` gradients, returns `W^T grad_out`.
    pub fn backward(&mut self, grad_out: &[f64], cache: &mut DenseCache) -> Result<Vec<f64>> {
        let x = cache.input.take().ok_or(Error::MissingCache("dense"))?;
        if grad_out.len() != self.out_dim {
            return Err(Error::shape("dense_backward", self.out_dim, grad_out.len()));
        }
        let n = self.in_dim;
        let mut grad_in = vec![0.0; n];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.bias.grad[o] += g;
            axpy(g, &x, &mut self.weight.grad[o * n..(o + 1) * n]);
            axpy(g, &self.weight.value[o * n..(o + 1) * n], &mut grad_in);
        }
        Ok(grad_in)
    }
}

impl Parameters for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
