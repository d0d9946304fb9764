use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// The crate-wide deterministic generator.
pub type SeededRng = ChaCha8Rng;

/// Zero-mean Gaussian samples with standard deviation `sqrt(2 / fan_in)`.
pub fn he_init<R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    assert!(fan_in >= 1, "fan_in must be positive");
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    (0..len).map(|_| normal.sample(rng)).collect()
}
