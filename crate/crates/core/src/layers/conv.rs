//! Temporal (1-D) convolution: width-3 filters, stride 1, no padding.

use rand::Rng;

use super::gemm::{gemm, View};
use super::he_init;
use crate::error::{Error, Result};
use crate::params::{Param, Parameters};
use crate::tensor::Tensor2;

pub const FILTER_WIDTH: usize = 3;

/// `weight` is `filters x (3 * in_channels)` row-major, with the window
/// laid out time-major: `weight[f, d * C + c]` multiplies `input[t + d, c]`.
#[derive(Clone, Debug)]
pub struct TemporalConv {
    in_channels: usize,
    filters: usize,
    pub weight: Param,
    pub bias: Param,
}

#[derive(Clone, Debug, Default)]
pub struct ConvCache {
    input: Option<Tensor2>,
}

impl TemporalConv {
    pub fn new(name: &str, in_channels: usize, filters: usize) -> Self {
        TemporalConv {
            in_channels,
            filters,
            weight: Param::zeros(format!("{name}.weight"), filters * FILTER_WIDTH * in_channels),
            bias: Param::zeros(format!("{name}.bias"), filters),
        }
    }

    /// He-initialised weights, zero bias.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in = FILTER_WIDTH * self.in_channels;
        self.weight.value = he_init(self.weight.len(), fan_in, rng);
        self.bias.value.fill(0.0);
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    fn window(&self) -> usize {
        FILTER_WIDTH * self.in_channels
    }

    pub fn output_len(input_len: usize) -> Option<usize> {
        input_len.checked_sub(FILTER_WIDTH - 1).filter(|&n| n >= 1)
    }

    fn check_input(&self, input: &Tensor2) -> Result<usize> {
        input.expect_cols("temporal_conv_forward", self.in_channels)?;
        Self::output_len(input.rows()).ok_or(Error::TooShort {
            op: "temporal_conv_forward",
            len: input.rows(),
            min: FILTER_WIDTH,
        })
    }

    pub fn forward(&self, input: &Tensor2, cache: &mut ConvCache) -> Result<Tensor2> {
        let out = self.apply(input)?;
        cache.input = Some(input.clone());
        Ok(out)
    }

    /// Forward without recording a cache.
    pub fn apply(&self, input: &Tensor2) -> Result<Tensor2> {
        let t_out = self.check_input(input)?;
        let k = self.window();
        let c = self.in_channels;
        let f = self.filters;
        let mut out = Tensor2::zeros(t_out, f);
        for t in 0..t_out {
            out.row_mut(t).copy_from_slice(&self.bias.value);
        }
        // Rows t..t+3 are contiguous in the row-major input, so the windows
        // form a `t_out x 3C` matrix with row stride C.
        let windows = View::new(input.data(), t_out, k, c, 1);
        let w = View::rows(&self.weight.value, f, k).t();
        gemm(windows, w, 1.0, out.data_mut(), f, 1);
        Ok(out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor2, cache: &mut ConvCache) -> Result<Tensor2> {
        let input = cache.input.take().ok_or(Error::MissingCache("temporal_conv"))?;
        let mut grad_in = Tensor2::zeros(input.rows(), input.cols());
        self.accumulate(grad_out, &input, Some(&mut grad_in))?;
        Ok(grad_in)
    }

    /// Like [`backward`](Self::backward) but skips the input gradient, for
    /// layers fed directly by fixed encodings.
    pub fn backward_params(&mut self, grad_out: &Tensor2, cache: &mut ConvCache) -> Result<()> {
        let input = cache.input.take().ok_or(Error::MissingCache("temporal_conv"))?;
        self.accumulate(grad_out, &input, None)
    }

    fn accumulate(&mut self, grad_out: &Tensor2, input: &Tensor2, grad_in: Option<&mut Tensor2>) -> Result<()> {
        let t_out = input.rows() - (FILTER_WIDTH - 1);
        grad_out.expect_shape("temporal_conv_backward", t_out, self.filters)?;
        let k = self.window();
        let c = self.in_channels;
        let f = self.filters;
        for t in 0..t_out {
            axpy(1.0, grad_out.row(t), &mut self.bias.grad);
        }
        let g = View::rows(grad_out.data(), t_out, f);
        let windows = View::new(input.data(), t_out, k, c, 1);
        gemm(g.t(), windows, 1.0, &mut self.weight.grad, k, 1);
        if let Some(gi) = grad_in {
            // One product per tap keeps the overlapping windows from aliasing.
            for d in 0..FILTER_WIDTH {
                let w_d = View::new(&self.weight.value[d * c..], f, c, k, 1);
                gemm(g, w_d, 1.0, &mut gi.data_mut()[d * c..], c, 1);
            }
        }
        Ok(())
    }
}

impl Parameters for TemporalConv {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Four interleaved partial sums so the loop pipelines.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
