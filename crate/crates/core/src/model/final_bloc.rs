use rand::Rng;

use super::blocks::{ConvBlock, ConvBlockCache};
use crate::error::{Error, Result};
use crate::layers::{sigmoid, Dense, DenseCache, MaxPool, Mode, PoolCache};
use crate::params::{Buffer, Param, Parameters};
use crate::tensor::Tensor2;

/// Two (conv block, max-pool) stages, a row-major flatten, and three dense
/// layers (ReLU, ReLU, linear). Produces one logit per batch member.
#[derive(Clone, Debug)]
pub struct FinalBloc {
    pub stages: [ConvBlock; 2],
    pub pools: [MaxPool; 2],
    pub dense: [Dense; 3],
}

#[derive(Clone, Debug, Default)]
pub struct FinalCache {
    blocks: [ConvBlockCache; 2],
    pools: [Vec<PoolCache>; 2],
    flat_shape: (usize, usize),
    dense: [Vec<DenseCache>; 3],
    relu: [Vec<Vec<bool>>; 2],
}

impl FinalBloc {
    pub fn new(
        name: &str,
        in_channels: usize,
        filters: [usize; 2],
        pools: [usize; 2],
        flatten: usize,
        dense: [usize; 2],
    ) -> Result<Self> {
        Ok(FinalBloc {
            stages: [
                ConvBlock::new(&format!("{name}.stage0"), in_channels, filters[0]),
                ConvBlock::new(&format!("{name}.stage1"), filters[0], filters[1]),
            ],
            pools: [MaxPool::new(pools[0])?, MaxPool::new(pools[1])?],
            dense: [
                Dense::new(&format!("{name}.fc0"), flatten, dense[0]),
                Dense::new(&format!("{name}.fc1"), dense[0], dense[1]),
                Dense::new(&format!("{name}.fc2"), dense[1], 1),
            ],
        })
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for s in &mut self.stages {
            s.init(rng);
        }
        for d in &mut self.dense {
            d.init(rng);
        }
    }

    /// Logits for each batch member; training-mode statistics are left in
    /// `cache` for [`commit`](Self::commit).
    pub fn run(&self, batch: &[Tensor2], mode: Mode, cache: &mut FinalCache) -> Result<Vec<f64>> {
        let mut h = batch.to_vec();
        for s in 0..2 {
            h = self.stages[s].run(&h, mode, &mut cache.blocks[s])?;
            let pcs = &mut cache.pools[s];
            pcs.clear();
            pcs.resize_with(h.len(), PoolCache::default);
            h = h
                .iter()
                .zip(pcs.iter_mut())
                .map(|(x, c)| self.pools[s].forward(x, c))
                .collect();
        }
        let flat_shape = h.first().map(Tensor2::shape).ok_or(Error::EmptyBatch)?;
        if flat_shape.0 * flat_shape.1 != self.dense[0].in_dim() {
            return Err(Error::shape(
                "final_bloc_forward",
                format!("flatten size {}", self.dense[0].in_dim()),
                format!("{}x{}", flat_shape.0, flat_shape.1),
            ));
        }
        cache.flat_shape = flat_shape;
        for v in cache.dense.iter_mut() {
            v.clear();
            v.resize_with(h.len(), DenseCache::default);
        }
        for v in cache.relu.iter_mut() {
            v.clear();
        }
        let mut logits = Vec::with_capacity(h.len());
        for (b, x) in h.into_iter().enumerate() {
            let mut v = x.into_vec();
            for l in 0..3 {
                v = self.dense[l].forward(&v, &mut cache.dense[l][b])?;
                if l < 2 {
                    cache.relu[l].push(v.iter().map(|&z| z > 0.0).collect());
                    v.iter_mut().for_each(|z| *z = z.max(0.0));
                }
            }
            logits.push(v[0]);
        }
        Ok(logits)
    }

    /// Probabilities in (0, 1) for each batch member.
    pub fn forward(&mut self, batch: &[Tensor2], mode: Mode, cache: &mut FinalCache) -> Result<Vec<f64>> {
        let logits = self.run(batch, mode, cache)?;
        self.commit(cache);
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    pub fn commit(&mut self, cache: &FinalCache) {
        for (s, c) in self.stages.iter_mut().zip(&cache.blocks) {
            s.commit(c);
        }
    }

    /// Takes d(loss)/d(logit) per batch member and returns the input gradients.
    pub fn backward(&mut self, dlogits: &[f64], cache: &mut FinalCache) -> Result<Vec<Tensor2>> {
        let n = cache.dense[2].len();
        if n == 0 {
            return Err(Error::MissingCache("final bloc"));
        }
        if dlogits.len() != n {
            return Err(Error::LengthMismatch(dlogits.len(), n));
        }
        let (rows, cols) = cache.flat_shape;
        let mut g_flat = Vec::with_capacity(n);
        for (b, &dz) in dlogits.iter().enumerate() {
            let mut g = vec![dz];
            for l in (0..3).rev() {
                if l < 2 {
                    let mask = &cache.relu[l][b];
                    for (gi, &on) in g.iter_mut().zip(mask) {
                        if !on {
                            *gi = 0.0;
                        }
                    }
                }
                g = self.dense[l].backward(&g, &mut cache.dense[l][b])?;
            }
            g_flat.push(Tensor2::from_vec(rows, cols, g)?);
        }
        let mut g = g_flat;
        for s in (0..2).rev() {
            g = g
                .iter()
                .zip(cache.pools[s].iter_mut())
                .map(|(g, c)| self.pools[s].backward(g, c))
                .collect::<Result<_>>()?;
            g = self.stages[s].backward(g, &mut cache.blocks[s])?;
        }
        Ok(g)
    }
}

impl Parameters for FinalBloc {
    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.stages.iter().flat_map(|s| s.params()).collect();
        v.extend(self.dense.iter().flat_map(|d| d.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.stages.iter_mut().flat_map(|s| s.params_mut()).collect();
        v.extend(self.dense.iter_mut().flat_map(|d| d.params_mut()));
        v
    }

    fn buffers(&self) -> Vec<&Buffer> {
        self.stages.iter().flat_map(|s| s.buffers()).collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.stages.iter_mut().flat_map(|s| s.buffers_mut()).collect()
    }
}
