//! Temporal batch normalization. Statistics are pooled per channel over
//! every time step of every batch member.

use super::Mode;
use crate::error::{Error, Result};
use crate::params::{Buffer, Param, Parameters};
use crate::tensor::Tensor2;

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct BatchNorm {
    channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Buffer,
    pub running_var: Buffer,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Default)]
pub struct BatchNormCache {
    xhat: Option<Vec<Tensor2>>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    mode: Option<Mode>,
}

impl BatchNormCache {
    /// Batch statistics of the last train-mode forward, if any.
    pub fn batch_stats(&self) -> Option<(&[f64], &[f64])> {
        (self.mode == Some(Mode::Train)).then_some((&self.mean[..], &self.var[..]))
    }
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Param::from_values(format!("{name}.gamma"), vec![1.0; channels]),
            beta: Param::zeros(format!("{name}.beta"), channels),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: vec![0.0; channels],
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: vec![1.0; channels],
            },
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Normalizes the batch; in train mode also folds the batch statistics
    /// into the running estimates.
    pub fn forward(&mut self, batch: &[Tensor2], mode: Mode, cache: &mut BatchNormCache) -> Result<Vec<Tensor2>> {
        let out = self.normalize(batch, mode, cache)?;
        if mode == Mode::Train {
            self.update_running(cache);
        }
        Ok(out)
    }

    /// Forward pass that leaves the running statistics untouched. In train
    /// mode the batch statistics stay in `cache` for [`update_running`](Self::update_running).
    pub fn normalize(&self, batch: &[Tensor2], mode: Mode, cache: &mut BatchNormCache) -> Result<Vec<Tensor2>> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let c = self.channels;
        for x in batch {
            x.expect_cols("batchnorm_forward", c)?;
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let n: usize = batch.iter().map(Tensor2::rows).sum();
                if n < 2 {
                    return Err(Error::TooShort {
                        op: "batchnorm_forward (train)",
                        len: n,
                        min: 2,
                    });
                }
                batch_moments(batch, c, n)
            }
            Mode::Infer => (self.running_mean.value.clone(), self.running_var.value.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat_all = Vec::with_capacity(batch.len());
        let mut out_all = Vec::with_capacity(batch.len());
        for x in batch {
            let mut xhat = x.clone();
            let mut out = x.clone();
            for t in 0..x.rows() {
                let xr = xhat.row_mut(t);
                for ch in 0..c {
                    xr[ch] = (xr[ch] - mean[ch]) * inv_std[ch];
                }
                let or = out.row_mut(t);
                for ch in 0..c {
                    or[ch] = self.gamma.value[ch] * xr[ch] + self.beta.value[ch];
                }
            }
            xhat_all.push(xhat);
            out_all.push(out);
        }
        cache.xhat = (mode == Mode::Train).then_some(xhat_all);
        cache.inv_std = inv_std;
        cache.mean = mean;
        cache.var = var;
        cache.mode = Some(mode);
        Ok(out_all)
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = cache.batch_stats() {
            let m = self.momentum;
            for ch in 0..self.channels {
                self.running_mean.value[ch] = m * self.running_mean.value[ch] + (1.0 - m) * mean[ch];
                self.running_var.value[ch] = m * self.running_var.value[ch] + (1.0 - m) * var[ch];
            }
        }
    }

    /// Gradient through a train-mode forward, including the coupling through
    /// the shared batch mean and variance.
    pub fn backward(&mut self, grad_out: &[Tensor2], cache: &mut BatchNormCache) -> Result<Vec<Tensor2>> {
        match cache.mode {
            None => return Err(Error::MissingCache("batchnorm")),
            Some(Mode::Infer) => return Err(Error::InferModeBackward),
            Some(Mode::Train) => {}
        }
        let xhat = cache.xhat.take().ok_or(Error::MissingCache("batchnorm"))?;
        cache.mode = None;
        if grad_out.len() != xhat.len() {
            return Err(Error::LengthMismatch(grad_out.len(), xhat.len()));
        }
        let c = self.channels;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        let mut n = 0usize;
        for (g, xh) in grad_out.iter().zip(&xhat) {
            g.expect_shape("batchnorm_backward", xh.rows(), c)?;
            n += g.rows();
            for t in 0..g.rows() {
                let (gr, xr) = (g.row(t), xh.row(t));
                for ch in 0..c {
                    sum_g[ch] += gr[ch];
                    sum_gx[ch] += gr[ch] * xr[ch];
                }
            }
        }
        for ch in 0..c {
            self.beta.grad[ch] += sum_g[ch];
            self.gamma.grad[ch] += sum_gx[ch];
        }
        let nf = n as f64;
        let scale: Vec<f64> = (0..c).map(|ch| self.gamma.value[ch] * cache.inv_std[ch] / nf).collect();
        Ok(grad_out
            .iter()
            .zip(&xhat)
            .map(|(g, xh)| {
                let mut gi = g.clone();
                for t in 0..g.rows() {
                    let xr = xh.row(t);
                    let r = gi.row_mut(t);
                    for ch in 0..c {
                        r[ch] = scale[ch] * (nf * r[ch] - sum_g[ch] - xr[ch] * sum_gx[ch]);
                    }
                }
                gi
            })
            .collect())
    }
}

fn batch_moments(batch: &[Tensor2], c: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let mut mean = vec![0.0; c];
    for x in batch {
        for t in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(t)) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; c];
    for x in batch {
        for t in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(t)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    var.iter_mut().for_each(|s| *s /= nf);
    (mean, var)
}

impl Parameters for BatchNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Buffer> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
