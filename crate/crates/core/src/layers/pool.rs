//! Non-overlapping temporal max-pooling.

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool {
    k: usize,
}

#[derive(Clone, Debug, Default)]
pub struct PoolCache {
    /// Flat input index of each output's maximum.
    argmax: Option<Vec<usize>>,
    in_shape: (usize, usize),
}

impl MaxPool {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPoolSize(k));
        }
        Ok(MaxPool { k })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    /// Trailing `len % k` rows are dropped.
    pub fn output_len(&self, input_len: usize) -> usize {
        input_len / self.k
    }

    /// Ties resolve to the lowest row index.
    pub fn forward(&self, input: &Tensor2, cache: &mut PoolCache) -> Tensor2 {
        let (rows, cols) = input.shape();
        let out_rows = self.output_len(rows);
        let mut out = Tensor2::zeros(out_rows, cols);
        let mut argmax = vec![0usize; out_rows * cols];
        let x = input.data();
        for t in 0..out_rows {
            let base = t * self.k * cols;
            let orow = &mut out.data_mut()[t * cols..(t + 1) * cols];
            let arow = &mut argmax[t * cols..(t + 1) * cols];
            orow.copy_from_slice(&x[base..base + cols]);
            for (c, a) in arow.iter_mut().enumerate() {
                *a = base + c;
            }
            for r in 1..self.k {
                let off = base + r * cols;
                for c in 0..cols {
                    if x[off + c] > orow[c] {
                        orow[c] = x[off + c];
                        arow[c] = off + c;
                    }
                }
            }
        }
        cache.argmax = Some(argmax);
        cache.in_shape = (rows, cols);
        out
    }

    pub fn backward(&self, grad_out: &Tensor2, cache: &mut PoolCache) -> Result<Tensor2> {
        let argmax = cache.argmax.take().ok_or(Error::MissingCache("maxpool"))?;
        let (rows, cols) = cache.in_shape;
        grad_out.expect_shape("maxpool_backward", self.output_len(rows), cols)?;
        let mut grad_in = Tensor2::zeros(rows, cols);
        let gi = grad_in.data_mut();
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            gi[idx] += g;
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error, FD_STEP};
    use crate::layers::SeededRng;
    use rand::{Rng, SeedableRng};

    fn col(v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn pools_and_routes() {
        let pool = MaxPool::new(2).unwrap();
        let mut cache = PoolCache::default();
        let out = pool.forward(&col(&[1.0, 3.0, 2.0, 5.0]), &mut cache);
        assert_eq!(out.data(), &[3.0, 5.0]);
        let g = pool.backward(&col(&[1.0, 1.0]), &mut cache).unwrap();
        assert_eq!(g.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let pool = MaxPool::new(2).unwrap();
        let mut cache = PoolCache::default();
        pool.forward(&col(&[2.0, 2.0]), &mut cache);
        let g = pool.backward(&col(&[1.0]), &mut cache).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0]);
    }

    #[test]
    fn identity_and_remainder() {
        let x = col(&[4.0, -1.0, 7.0]);
        let mut cache = PoolCache::default();
        assert_eq!(MaxPool::new(1).unwrap().forward(&x, &mut cache), x);
        let seven = Tensor2::zeros(7, 3);
        assert_eq!(MaxPool::new(2).unwrap().forward(&seven, &mut cache).rows(), 3);
        assert!(matches!(MaxPool::new(0), Err(Error::InvalidPoolSize(0))));
    }

    #[test]
    fn pooled_sum_matches_finite_differences() {
        let mut rng = SeededRng::seed_from_u64(4);
        let data: Vec<f64> = (0..11 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor2::from_vec(11, 3, data).unwrap();
        let pool = MaxPool::new(3).unwrap();
        let mut cache = PoolCache::default();
        let out = pool.forward(&x, &mut cache);
        let ones = Tensor2::from_vec(out.rows(), 3, vec![1.0; out.rows() * 3]).unwrap();
        let g = pool.backward(&ones, &mut cache).unwrap();
        let numeric = central_difference(x.data(), FD_STEP, |v| {
            let t = Tensor2::from_vec(11, 3, v.to_vec()).unwrap();
            pool.forward(&t, &mut PoolCache::default()).sum()
        });
        assert!(max_relative_error(g.data(), &numeric) < 1e-6);
    }
}
