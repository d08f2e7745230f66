use alloc::format;
use alloc::vec::Vec;

use super::series::ODSeries;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Global z-score statistics fitted on the training portion only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    /// Set when the training data had zero spread and `std` was forced to 1.
    pub std_fallback: bool,
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            std_fallback: false,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply_tensor(&self, x: &Tensor) -> Tensor {
        x.map(|v| self.apply(v))
    }

    pub fn invert_tensor(&self, z: &Tensor) -> Tensor {
        z.map(|v| self.invert(v))
    }
}

/// Chronological train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Self { train, val, test };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.train, self.val, self.test]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.train > 0.0;
        if !ok {
            return Err(Error::config(format!("invalid split ratios {self:?}")));
        }
        Ok(())
    }

    pub fn train_fraction(&self) -> f64 {
        self.train / (self.train + self.val + self.test)
    }

    /// Bin counts `[train, val, test]`; the test split absorbs rounding.
    pub fn lengths(&self, total: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let sum = self.train + self.val + self.test;
        let n_train = floor_count(total, self.train / sum);
        let n_val = floor_count(total, self.val / sum).min(total - n_train);
        Ok([n_train, n_val, total - n_train - n_val])
    }
}

// tolerate representation error such as 0.7 * 100 = 69.999...
fn floor_count(total: usize, fraction: f64) -> usize {
    let raw = libm::floor(total as f64 * fraction + 1e-9);
    (raw.max(0.0) as usize).min(total)
}

/// Fits mean and population standard deviation over the first
/// `⌊train_fraction · T⌋` bins of `flows` (time on axis 0).
pub fn fit_normalizer_tensor(flows: &Tensor, train_fraction: f64) -> Result<NormStats> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::config(format!(
            "train fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let total = flows.shape()[0];
    let bins = floor_count(total, train_fraction);
    if bins == 0 {
        return Err(Error::config(format!(
            "training portion of {total} bins at fraction {train_fraction} is empty"
        )));
    }
    let per: usize = flows.shape()[1..].iter().product();
    let values = &flows.data()[..bins * per];
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if std > 0.0 && std.is_finite() {
        Ok(NormStats {
            mean,
            std,
            std_fallback: false,
        })
    } else {
        Ok(NormStats {
            mean,
            std: 1.0,
            std_fallback: true,
        })
    }
}

pub fn fit_normalizer(series: &ODSeries, train_fraction: f64) -> Result<NormStats> {
    fit_normalizer_tensor(&series.flows, train_fraction)
}

/// One supervised pair: history bins `[t−H+1, t]`, target bins `[t+1, t+P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `[H, entities, features]`, normalized.
    pub x: Tensor,
    /// `[P, entities, features]`, normalized.
    pub y: Tensor,
    /// Series index of the last history bin.
    pub t_anchor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    /// Bin counts per split.
    pub lengths: [usize; 3],
}

impl Splits {
    pub fn by_name(&self, name: &str) -> Option<&[WindowSample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Number of windows a split of `len` bins yields.
pub fn window_count(len: usize, h: usize, p: usize) -> usize {
    (len + 1).saturating_sub(h + p)
}

/// Splits `flows` (`[T, ...]`) chronologically and cuts windows that stay
/// inside their split.
pub fn split_and_window_tensor(
    flows: &Tensor,
    stats: &NormStats,
    ratios: SplitRatios,
    h: usize,
    p: usize,
) -> Result<Splits> {
    if h == 0 || p == 0 {
        return Err(Error::config(format!(
            "history and horizon must be at least 1 (H={h}, P={p})"
        )));
    }
    let total = flows.shape()[0];
    let lengths = ratios.lengths(total)?;
    for (name, len) in ["train", "val", "test"].iter().zip(lengths) {
        if len < h + p {
            return Err(Error::config(format!(
                "{name} split has {len} bins but H={h}, P={p} requires at least {}",
                h + p
            )));
        }
    }
    let normalized = stats.apply_tensor(flows);
    let mut start = 0;
    let mut out: [Vec<WindowSample>; 3] = Default::default();
    for (slot, len) in out.iter_mut().zip(lengths) {
        *slot = (0..window_count(len, h, p))
            .map(|k| {
                let first = start + k;
                Ok(WindowSample {
                    x: crate::diffmath::ops::slice_axis(&normalized, 0, first, h)?,
                    y: crate::diffmath::ops::slice_axis(&normalized, 0, first + h, p)?,
                    t_anchor: first + h - 1,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        start += len;
    }
    let [train, val, test] = out;
    Ok(Splits {
        train,
        val,
        test,
        lengths,
    })
}

pub fn split_and_window(
    series: &ODSeries,
    stats: &NormStats,
    ratios: SplitRatios,
    h: usize,
    p: usize,
) -> Result<Splits> {
    split_and_window_tensor(&series.flows, stats, ratios, h, p)
}

/// Stacks samples into batch tensors `([B, H, ...], [B, P, ...])`.
pub fn stack_batch(samples: &[&WindowSample]) -> Result<(Tensor, Tensor)> {
    let xs: Vec<&Tensor> = samples.iter().map(|s| &s.x).collect();
    let ys: Vec<&Tensor> = samples.iter().map(|s| &s.y).collect();
    Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
}
