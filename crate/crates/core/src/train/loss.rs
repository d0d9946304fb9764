use crate::error::{Error, Result};

/// Default probability clamp applied before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn check(p: &[f64], c: &[f64]) -> Result<()> {
    if p.len() != c.len() {
        return Err(Error::LengthMismatch(p.len(), c.len()));
    }
    if p.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(&bad) = c.iter().find(|&&c| c != 0.0 && c != 1.0) {
        return Err(Error::InvalidLabel(bad));
    }
    if let Some(&bad) = p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidProbability(bad));
    }
    Ok(())
}

/// Mean negative log-likelihood of binary clicks, with each probability
/// clamped to `[eps, 1 - eps]`.
pub fn cross_entropy_loss(p: &[f64], c: &[f64], eps: f64) -> Result<f64> {
    check(p, c)?;
    let sum: f64 = p
        .iter()
        .zip(c)
        .map(|(&p, &c)| {
            let p = p.clamp(eps, 1.0 - eps);
            c * p.ln() + (1.0 - c) * (1.0 - p).ln()
        })
        .sum();
    Ok(-sum / p.len() as f64)
}

/// d(loss)/d(logit) for sigmoid outputs: `(p - c) / n`.
pub fn logit_gradient(p: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    check(p, c)?;
    let n = p.len() as f64;
    Ok(p.iter().zip(c).map(|(&p, &c)| (p - c) / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, relative_error};
    use crate::layers::{sigmoid, SeededRng};
    use rand::{Rng, SeedableRng};

    #[test]
    fn symmetric_case_is_ln2() {
        let l = cross_entropy_loss(&[0.5, 0.5], &[1.0, 0.0], PROB_CLAMP).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn clamp_boundary() {
        let eps = PROB_CLAMP;
        let l = cross_entropy_loss(&[1.0], &[1.0], eps).unwrap();
        assert!((l + (1.0 - eps).ln()).abs() < 1e-18);
        assert!((l - eps).abs() < 1e-12);
        let l0 = cross_entropy_loss(&[0.0], &[1.0], eps).unwrap();
        assert!(l0.is_finite());
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = SeededRng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..100);
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
            let c: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
            let mut ll = 0.0;
            for i in 0..n {
                if c[i] == 1.0 {
                    ll += p[i].ln();
                } else {
                    ll += (1.0 - p[i]).ln();
                }
            }
            let l = cross_entropy_loss(&p, &c, PROB_CLAMP).unwrap();
            assert!((l - (-ll / n as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_gradient_matches_differences() {
        let mut rng = SeededRng::seed_from_u64(4);
        let z: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
        let c: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
        let g = logit_gradient(&p, &c).unwrap();
        let num = central_difference(&z, 1e-5, |z| {
            let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
            cross_entropy_loss(&p, &c, PROB_CLAMP).unwrap()
        });
        for (a, n) in g.iter().zip(&num) {
            assert!(relative_error(*a, *n) < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            cross_entropy_loss(&[0.5], &[1.0, 0.0], PROB_CLAMP),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(matches!(
            cross_entropy_loss(&[0.5], &[2.0], PROB_CLAMP),
            Err(Error::InvalidLabel(_))
        ));
        assert!(matches!(
            cross_entropy_loss(&[f64::NAN], &[1.0], PROB_CLAMP),
            Err(Error::InvalidProbability(_))
        ));
    }
}
