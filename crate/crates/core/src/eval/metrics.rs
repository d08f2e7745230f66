use crate::data::NormStats;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Targets with `|y|` at or below this (original scale) are left out of MAPE.
pub const DEFAULT_MAPE_THRESHOLD: f64 = 1e-6;

/// Error summary on the original value scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when every target was masked.
    pub mape_percent: Option<f64>,
    pub n_total: usize,
    pub n_mape_used: usize,
}

/// MAE, RMSE and masked MAPE after inverting the z-score on both tensors.
pub fn compute_metrics(
    pred_norm: &Tensor,
    target_norm: &Tensor,
    stats: &NormStats,
    mape_threshold: f64,
) -> Result<MetricsReport> {
    if !pred_norm.same_shape(target_norm) {
        return Err(Error::dim(
            "compute_metrics",
            pred_norm.shape(),
            target_norm.shape(),
        ));
    }
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut pct_sum = 0.0;
    let mut used = 0usize;
    for (&p, &t) in pred_norm.data().iter().zip(target_norm.data()) {
        let y_hat = stats.invert(p);
        let y = stats.invert(t);
        let r = y_hat - y;
        abs_sum += libm::fabs(r);
        sq_sum += r * r;
        if libm::fabs(y) > mape_threshold {
            pct_sum += libm::fabs(r / y);
            used += 1;
        }
    }
    let n = pred_norm.len();
    Ok(MetricsReport {
        mae: abs_sum / n as f64,
        rmse: libm::sqrt(sq_sum / n as f64),
        mape_percent: (used > 0).then(|| 100.0 * pct_sum / used as f64),
        n_total: n,
        n_mape_used: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let y = v(&[1.0, 2.0, 3.0]);
        let m = compute_metrics(&y, &y, &NormStats::identity(), DEFAULT_MAPE_THRESHOLD).unwrap();
        assert_eq!((m.mae, m.rmse, m.mape_percent), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn hand_arithmetic() {
        let m = compute_metrics(
            &v(&[2.0, 2.0, 5.0]),
            &v(&[1.0, 2.0, 3.0]),
            &NormStats::identity(),
            DEFAULT_MAPE_THRESHOLD,
        )
        .unwrap();
        assert!((m.mae - 1.0).abs() < 1e-15);
        assert!((m.rmse - libm::sqrt(5.0 / 3.0)).abs() < 1e-15);
        let mape = 100.0 * (1.0 + 0.0 + 2.0 / 3.0) / 3.0;
        assert!((m.mape_percent.unwrap() - mape).abs() < 1e-12);
        assert!((m.mape_percent.unwrap() - 55.5556).abs() < 1e-4);
        assert_eq!(m.n_mape_used, 3);
    }

    #[test]
    fn zero_target_is_masked() {
        let m = compute_metrics(
            &v(&[1.0, 2.0]),
            &v(&[0.0, 2.0]),
            &NormStats::identity(),
            DEFAULT_MAPE_THRESHOLD,
        )
        .unwrap();
        assert_eq!(m.mape_percent, Some(0.0));
        assert_eq!(m.n_mape_used, 1);
        assert_eq!(m.mae, 0.5);
    }

    #[test]
    fn all_masked_is_undefined_not_zero() {
        let m = compute_metrics(&v(&[1.0]), &v(&[0.0]), &NormStats::identity(), 1e-6).unwrap();
        assert_eq!(m.mape_percent, None);
        assert_eq!(m.n_mape_used, 0);
    }

    #[test]
    fn inversion_happens_first() {
        let stats = NormStats {
            mean: 10.0,
            std: 2.0,
            std_fallback: false,
        };
        // normalized 0 and 1 are 10 and 12 on the original scale
        let m = compute_metrics(&v(&[1.0]), &v(&[0.0]), &stats, 1e-6).unwrap();
        assert_eq!(m.mae, 2.0);
        assert!((m.mape_percent.unwrap() - 20.0).abs() < 1e-12);
    }
}
