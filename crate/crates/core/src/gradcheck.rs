//! Central finite-difference verification of analytic gradients.

use crate::params::Parameters;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively;
/// otherwise a zero gradient against O(1e-11) difference noise reads as 100%.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Central differences of `f` around `x`, one coordinate at a time.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest relative error between two gradient vectors.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub name: String,
    pub len: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err() < tolerance
    }

    pub fn worst_block(&self) -> Option<&BlockReport> {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares analytic parameter gradients of a scalar function against
/// central differences.
///
/// `eval(model, with_grads)` must return the scalar and, when `with_grads` is
/// set, leave d(scalar)/d(param) accumulated in the model's gradient slots.
/// Gradients are zeroed before the analytic pass.
pub fn gradient_check<M, F>(model: &mut M, mut eval: F, h: f64) -> GradCheckReport
where
    M: Parameters,
    F: FnMut(&mut M, bool) -> f64,
{
    model.zero_grads();
    eval(model, true);
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.clone()).collect();

    let mut blocks = Vec::with_capacity(analytic.len());
    for (b, grads) in analytic.iter().enumerate() {
        let name = model.params()[b].name.clone();
        let mut max_rel_err = 0.0f64;
        let mut max_abs_err = 0.0f64;
        for (i, &a) in grads.iter().enumerate() {
            let orig = model.params()[b].value[i];
            model.params_mut()[b].value[i] = orig + h;
            let plus = eval(model, false);
            model.params_mut()[b].value[i] = orig - h;
            let minus = eval(model, false);
            model.params_mut()[b].value[i] = orig;
            let n = (plus - minus) / (2.0 * h);
            max_rel_err = max_rel_err.max(relative_error(a, n));
            max_abs_err = max_abs_err.max((a - n).abs());
        }
        blocks.push(BlockReport {
            name,
            len: grads.len(),
            max_rel_err,
            max_abs_err,
        });
    }
    GradCheckReport { blocks }
}
