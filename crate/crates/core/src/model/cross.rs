//! Cross-convolutional operator: every (query row, ad row) pair is
//! concatenated into one long sequence, convolved, activated and pooled.

use rand::Rng;

use super::blocks::{activate, activate_backward};
use crate::error::{Error, Result};
use crate::layers::gemm::{gemm, View};
use crate::layers::{conv::axpy, Activation, ConvCache, MaxPool, PoolCache, ReluCache, TemporalConv};
use crate::params::{Param, Parameters};
use crate::tensor::Tensor2;

/// `(k*m) x (l+r)` matrix whose row `i` (0-based) is `hq[i / m] ++ ha[i % m]`.
pub fn cross_product(hq: &Tensor2, ha: &Tensor2) -> Tensor2 {
    let (k, l) = hq.shape();
    let (m, r) = ha.shape();
    let mut out = Tensor2::zeros(k * m, l + r);
    for j in 0..k {
        for t in 0..m {
            let row = out.row_mut(j * m + t);
            row[..l].copy_from_slice(hq.row(j));
            row[l..].copy_from_slice(ha.row(t));
        }
    }
    out
}

/// Scatters a cross-product gradient back onto its two operands. Each query
/// row collects `m` contributions, each ad row `k`.
pub fn cross_product_backward(grad: &Tensor2, k: usize, l: usize, m: usize, r: usize) -> Result<(Tensor2, Tensor2)> {
    grad.expect_shape("cross_product_backward", k * m, l + r)?;
    let mut gq = Tensor2::zeros(k, l);
    let mut ga = Tensor2::zeros(m, r);
    for j in 0..k {
        for t in 0..m {
            let g = grad.row(j * m + t);
            for (d, s) in gq.row_mut(j).iter_mut().zip(&g[..l]) {
                *d += s;
            }
            for (d, s) in ga.row_mut(t).iter_mut().zip(&g[l..]) {
                *d += s;
            }
        }
    }
    Ok((gq, ga))
}

#[derive(Clone, Debug)]
pub struct CrossConv {
    pub conv: TemporalConv,
    pub activation: Activation,
    pub pool: MaxPool,
    query_channels: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CrossCache {
    hq: Option<Tensor2>,
    ha: Option<Tensor2>,
    act: ReluCache,
    pool: PoolCache,
}

impl CrossConv {
    pub fn new(
        name: &str,
        query_channels: usize,
        ad_channels: usize,
        filters: usize,
        activation: Activation,
        pool: usize,
    ) -> Result<Self> {
        Ok(CrossConv {
            conv: TemporalConv::new(&format!("{name}.conv"), query_channels + ad_channels, filters),
            activation,
            pool: MaxPool::new(pool)?,
            query_channels,
        })
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.conv.init(rng);
    }

    fn check(&self, hq: &Tensor2, ha: &Tensor2) -> Result<usize> {
        let (k, l) = hq.shape();
        let (m, r) = ha.shape();
        if l != self.query_channels || l + r != self.conv.in_channels() {
            return Err(Error::shape(
                "cross_conv_forward",
                format!("{}+{} channels", self.query_channels, self.conv.in_channels() - self.query_channels),
                format!("{l}+{r} channels"),
            ));
        }
        if k * m < 3 {
            return Err(Error::TooShort {
                op: "cross_conv_forward",
                len: k * m,
                min: 3,
            });
        }
        Ok(k * m - 2)
    }

    /// Reference path: materialises the cross product and convolves it.
    pub fn forward_explicit(&self, hq: &Tensor2, ha: &Tensor2) -> Result<Tensor2> {
        self.check(hq, ha)?;
        let z = self.conv.forward(&cross_product(hq, ha), &mut ConvCache::default())?;
        let a = activate(self.activation, z, &mut ReluCache::default());
        Ok(self.pool.forward(&a, &mut PoolCache::default()))
    }

    /// Same result as [`forward_explicit`](Self::forward_explicit) up to
    /// rounding, without building the cross product: each filter tap is
    /// projected onto the query and ad rows once and the conv output is
    /// assembled from those projections.
    pub fn forward(&self, hq: &Tensor2, ha: &Tensor2, cache: &mut CrossCache) -> Result<Tensor2> {
        let rows = self.check(hq, ha)?;
        let f = self.conv.filters();
        let m = ha.rows();
        let pq = self.project(hq, 0);
        let pa = self.project(ha, self.query_channels);
        let mut z = Tensor2::zeros(rows, f);
        for i in 0..rows {
            let out = z.row_mut(i);
            out.copy_from_slice(&self.conv.bias.value);
            for d in 0..3 {
                let (j, t) = ((i + d) / m, (i + d) % m);
                axpy(1.0, &pq[(j * 3 + d) * f..(j * 3 + d + 1) * f], out);
                axpy(1.0, &pa[(t * 3 + d) * f..(t * 3 + d + 1) * f], out);
            }
        }
        let a = activate(self.activation, z, &mut cache.act);
        let out = self.pool.forward(&a, &mut cache.pool);
        cache.hq = Some(hq.clone());
        cache.ha = Some(ha.clone());
        Ok(out)
    }

    /// `proj[(row * 3 + d) * F + f]` = tap `d` of filter `f` restricted to
    /// the channel range starting at `offset`, applied to `x.row(row)`.
    fn project(&self, x: &Tensor2, offset: usize) -> Vec<f64> {
        let f = self.conv.filters();
        let cin = self.conv.in_channels();
        let kw = 3 * cin;
        let w = &self.conv.weight.value;
        let width = x.cols();
        let mut proj = vec![0.0; x.rows() * 3 * f];
        let xv = View::rows(x.data(), x.rows(), width);
        for d in 0..3 {
            let w_d = View::new(&w[d * cin + offset..], f, width, kw, 1);
            gemm(xv, w_d.t(), 0.0, &mut proj[d * f..], 3 * f, 1);
        }
        proj
    }

    /// Accumulates conv gradients and returns the gradients for the query
    /// and ad representations.
    pub fn backward(&mut self, grad_out: &Tensor2, cache: &mut CrossCache) -> Result<(Tensor2, Tensor2)> {
        let (gq, ga) = self.backward_impl(grad_out, cache, true)?;
        Ok((gq.expect("requested"), ga.expect("requested")))
    }

    /// Parameter gradients only, for fixed inputs.
    pub fn backward_params(&mut self, grad_out: &Tensor2, cache: &mut CrossCache) -> Result<()> {
        self.backward_impl(grad_out, cache, false).map(|_| ())
    }

    fn backward_impl(
        &mut self,
        grad_out: &Tensor2,
        cache: &mut CrossCache,
        input_grads: bool,
    ) -> Result<(Option<Tensor2>, Option<Tensor2>)> {
        let hq = cache.hq.take().ok_or(Error::MissingCache("cross_conv"))?;
        let ha = cache.ha.take().ok_or(Error::MissingCache("cross_conv"))?;
        let g = self.pool.backward(grad_out, &mut cache.pool)?;
        let g = activate_backward(self.activation, g, &mut cache.act)?;

        let f = self.conv.filters();
        let (k, m) = (hq.rows(), ha.rows());
        let mut dpq = vec![0.0; k * 3 * f];
        let mut dpa = vec![0.0; m * 3 * f];
        for i in 0..g.rows() {
            let gr = g.row(i);
            axpy(1.0, gr, &mut self.conv.bias.grad);
            for d in 0..3 {
                let (j, t) = ((i + d) / m, (i + d) % m);
                axpy(1.0, gr, &mut dpq[(j * 3 + d) * f..(j * 3 + d + 1) * f]);
                axpy(1.0, gr, &mut dpa[(t * 3 + d) * f..(t * 3 + d + 1) * f]);
            }
        }
        let gq = self.unproject(&hq, &dpq, 0, input_grads);
        let ga = self.unproject(&ha, &dpa, self.query_channels, input_grads);
        Ok((gq, ga))
    }

    fn unproject(&mut self, x: &Tensor2, dproj: &[f64], offset: usize, input_grad: bool) -> Option<Tensor2> {
        let f = self.conv.filters();
        let cin = self.conv.in_channels();
        let kw = 3 * cin;
        let width = x.cols();
        let mut gx = input_grad.then(|| Tensor2::zeros(x.rows(), width));
        let xv = View::rows(x.data(), x.rows(), width);
        for d in 0..3 {
            let dp = View::new(&dproj[d * f..], x.rows(), f, 3 * f, 1);
            gemm(dp.t(), xv, 1.0, &mut self.conv.weight.grad[d * cin + offset..], kw, 1);
            if let Some(gx) = gx.as_mut() {
                let w_d = View::new(&self.conv.weight.value[d * cin + offset..], f, width, kw, 1);
                gemm(dp, w_d, 1.0, gx.data_mut(), width, 1);
            }
        }
        gx
    }
}

impl Parameters for CrossConv {
    fn params(&self) -> Vec<&Param> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.conv.params_mut()
    }
}
