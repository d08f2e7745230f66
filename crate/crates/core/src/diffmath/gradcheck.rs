use alloc::format;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compares analytic gradients against central differences.
///
/// `loss_fn` maps parameter values to `(loss, gradients)`; the gradients are
/// read once at the unperturbed point. Returns the largest
/// `|analytic − numeric| / max(1, |numeric|)` over every parameter entry.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    if !(eps > 0.0) {
        return Err(Error::config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let (loss, analytic) = loss_fn(params)?;
    if !loss.is_finite() {
        return Err(Error::numeric("loss is not finite at the base point"));
    }
    if analytic.len() != params.len() {
        return Err(Error::dim(
            "finite_diff_check",
            &[params.len()],
            &[analytic.len()],
        ));
    }
    for (p, g) in params.iter().zip(&analytic) {
        if !p.same_shape(g) {
            return Err(Error::dim("finite_diff_check", p.shape(), g.shape()));
        }
    }

    let mut probe: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let original = params[pi].data()[ei];
            probe[pi].data_mut()[ei] = original + eps;
            let (up, _) = loss_fn(&probe)?;
            probe[pi].data_mut()[ei] = original - eps;
            let (down, _) = loss_fn(&probe)?;
            probe[pi].data_mut()[ei] = original;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::numeric(format!(
                    "loss is not finite when perturbing parameter {pi} entry {ei}"
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[ei];
            let rel = libm::fabs(a - numeric) / libm::fabs(numeric).max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
