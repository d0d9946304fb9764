use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Activation applied after a standalone convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

#[derive(Clone, Debug, Default)]
pub struct ReluCache {
    mask: Option<Vec<bool>>,
    shape: (usize, usize),
}

pub fn relu_forward(input: &Tensor2, cache: &mut ReluCache) -> Tensor2 {
    cache.mask = Some(input.data().iter().map(|&x| x > 0.0).collect());
    cache.shape = input.shape();
    input.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// The subgradient at exactly zero is taken as 0.
pub fn relu_backward(grad_out: &Tensor2, cache: &mut ReluCache) -> Result<Tensor2> {
    let mask = cache.mask.take().ok_or(Error::MissingCache("relu"))?;
    let (rows, cols) = cache.shape;
    grad_out.expect_shape("relu_backward", rows, cols)?;
    let data = grad_out
        .data()
        .iter()
        .zip(&mask)
        .map(|(&g, &on)| if on { g } else { 0.0 })
        .collect();
    Tensor2::from_vec(rows, cols, data)
}

/// Logistic function, evaluated on the side of zero that cannot overflow.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let mut cache = ReluCache::default();
        let out = relu_forward(&col(&[-1.0, 0.0, 2.0]), &mut cache);
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&col(&[5.0, 5.0, 5.0]), &mut cache).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
        assert!(relu_backward(&col(&[1.0, 1.0, 1.0]), &mut cache).is_err());
    }

    #[test]
    fn relu_identity_on_positive() {
        let x = col(&[0.5, 1.0, 3.0]);
        let mut cache = ReluCache::default();
        assert_eq!(relu_forward(&x, &mut cache), x);
        let g = col(&[1.0, -2.0, 4.0]);
        assert_eq!(relu_backward(&g, &mut cache).unwrap(), g);
    }

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-745.0) > 0.0);
        assert!(sigmoid(700.0) <= 1.0);
        for z in [-30.0, -3.3, -0.1, 0.7, 12.0, 300.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-12);
        }
    }
}
