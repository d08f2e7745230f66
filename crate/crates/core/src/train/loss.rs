use crate::diffmath::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    MeanAbsolute,
    MeanSquared,
}

/// Mean of `|p − t|` or `(p − t)²` over all elements.
pub fn loss(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::dim("loss", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| match kind {
            LossKind::MeanAbsolute => libm::fabs(p - t),
            LossKind::MeanSquared => (p - t) * (p - t),
        })
        .sum();
    Ok(total / n)
}

/// Gradient of [`loss`] with respect to `pred`. The absolute-value kink
/// gets subgradient 0.
pub fn loss_grad(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<Tensor> {
    if !pred.same_shape(target) {
        return Err(Error::dim("loss_grad", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let r = p - t;
            match kind {
                LossKind::MeanAbsolute if r > 0.0 => 1.0 / n,
                LossKind::MeanAbsolute if r < 0.0 => -1.0 / n,
                LossKind::MeanAbsolute => 0.0,
                LossKind::MeanSquared => 2.0 * r / n,
            }
        })
        .collect();
    Tensor::new(pred.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let p = Tensor::vector(&[2.0, 2.0, 5.0]).unwrap();
        let t = Tensor::vector(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(loss(&p, &t, LossKind::MeanAbsolute).unwrap(), 1.0);
        assert!((loss(&p, &t, LossKind::MeanSquared).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(loss(&p, &p, LossKind::MeanAbsolute).unwrap(), 0.0);
        assert_eq!(loss(&p, &p, LossKind::MeanSquared).unwrap(), 0.0);
        let g = loss_grad(&p, &t, LossKind::MeanAbsolute).unwrap();
        assert_eq!(g.data(), &[1.0 / 3.0, 0.0, 1.0 / 3.0]);
        let g = loss_grad(&p, &t, LossKind::MeanSquared).unwrap();
        assert_eq!(g.data(), &[2.0 / 3.0, 0.0, 4.0 / 3.0]);
    }

    #[test]
    fn shape_mismatch() {
        let p = Tensor::vector(&[1.0, 2.0]).unwrap();
        let t = Tensor::vector(&[1.0]).unwrap();
        assert!(loss(&p, &t, LossKind::MeanAbsolute).is_err());
        assert!(loss_grad(&p, &t, LossKind::MeanSquared).is_err());
    }
}
