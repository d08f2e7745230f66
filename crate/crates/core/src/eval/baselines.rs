use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::WindowSample;
use crate::diffmath::ops;
use crate::diffmath::{ParamSet, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::model::{xavier_bound, Forecaster, Gradients};
use crate::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    HistoricalAverage,
    LastValue,
    PlainMlp,
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::HistoricalAverage => "historical_average",
            BaselineKind::LastValue => "last_value",
            BaselineKind::PlainMlp => "plain_mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "historical_average" => Some(Self::HistoricalAverage),
            "last_value" => Some(Self::LastValue),
            "plain_mlp" => Some(Self::PlainMlp),
            _ => None,
        }
    }
}

/// Repeats the final history bin across the horizon.
pub fn last_value_predict(x: &Tensor, horizon: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::dim("last_value", s, &[0, 0, 0, 0]));
    }
    let (b, h) = (s[0], s[1]);
    let last = ops::slice_axis(x, 1, h - 1, 1)?;
    let per: usize = s[2] * s[3];
    let mut data = Vec::with_capacity(b * horizon * per);
    for row in last.data().chunks(per) {
        for _ in 0..horizon {
            data.extend_from_slice(row);
        }
    }
    Tensor::new(vec![b, horizon, s[2], s[3]], data)
}

/// Mean training value per (bin of day, entity, feature).
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalAverage {
    /// `[bins_per_day, entities, features]`.
    table: Tensor,
}

impl HistoricalAverage {
    /// `flows` is `[T, E, F]`; only the first `train_bins` bins are read.
    pub fn fit(
        flows: &Tensor,
        bin_of_day: &[usize],
        bins_per_day: usize,
        train_bins: usize,
    ) -> Result<Self> {
        let s = flows.shape();
        if s.len() != 3 || bin_of_day.len() != s[0] || train_bins == 0 || train_bins > s[0] {
            return Err(Error::dim(
                "HistoricalAverage::fit",
                s,
                &[bin_of_day.len(), train_bins],
            ));
        }
        let per = s[1] * s[2];
        let mut sums = vec![0.0; bins_per_day * per];
        let mut counts = vec![0usize; bins_per_day];
        let data = flows.data();
        for t in 0..train_bins {
            let slot = bin_of_day[t];
            if slot >= bins_per_day {
                return Err(Error::config(format!("bin-of-day {slot} out of range")));
            }
            counts[slot] += 1;
            for (acc, v) in sums[slot * per..(slot + 1) * per]
                .iter_mut()
                .zip(&data[t * per..(t + 1) * per])
            {
                *acc += v;
            }
        }
        // slots never seen in training fall back to the overall training mean
        let global = data[..train_bins * per].iter().sum::<f64>() / (train_bins * per) as f64;
        for (slot, &c) in counts.iter().enumerate() {
            let cell = &mut sums[slot * per..(slot + 1) * per];
            if c == 0 {
                cell.fill(global);
            } else {
                cell.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        Ok(Self {
            table: Tensor::new(vec![bins_per_day, s[1], s[2]], sums)?,
        })
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Predictions for windows anchored at `t_anchor`, `[B, P, E, F]`.
    pub fn predict(
        &self,
        samples: &[WindowSample],
        bin_of_day: &[usize],
        horizon: usize,
    ) -> Result<Tensor> {
        let s = self.table.shape();
        let per = s[1] * s[2];
        let mut data = Vec::with_capacity(samples.len() * horizon * per);
        for sample in samples {
            for k in 1..=horizon {
                let t = sample.t_anchor + k;
                let slot = *bin_of_day.get(t).ok_or_else(|| {
                    Error::config(format!("target bin {t} is outside the series"))
                })?;
                data.extend_from_slice(&self.table.data()[slot * per..(slot + 1) * per]);
            }
        }
        Tensor::new(vec![samples.len().max(1), horizon, s[1], s[2]], data)
    }
}

pub const MLP_WEIGHT1: &str = "mlp.weight1";
pub const MLP_BIAS1: &str = "mlp.bias1";
pub const MLP_WEIGHT2: &str = "mlp.weight2";
pub const MLP_BIAS2: &str = "mlp.bias2";

/// Two-layer perceptron on the flattened history window.
#[derive(Debug, Clone, PartialEq)]
pub struct PlainMlp {
    shape_in: [usize; 3],
    shape_out: [usize; 3],
    params: ParamSet,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    flat: Tensor,
    pre: Tensor,
    act: Tensor,
    batch: usize,
}

impl PlainMlp {
    /// Maps `[H, E, F]` windows to `[P, E, d_o]`.
    pub fn new(
        shape_in: [usize; 3],
        shape_out: [usize; 3],
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if shape_in.contains(&0) || shape_out.contains(&0) || hidden == 0 {
            return Err(Error::config("MLP extents must be positive"));
        }
        let d_in: usize = shape_in.iter().product();
        let d_out: usize = shape_out.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |fan_in: usize, fan_out: usize| {
            let b = xavier_bound(fan_in, fan_out);
            Tensor::from_fn(&[fan_in, fan_out], |_| rng.random_range(-b..=b))
        };
        let mut params = ParamSet::new();
        params.push(Parameter::new(MLP_WEIGHT1, draw(d_in, hidden)?))?;
        params.push(Parameter::new(MLP_BIAS1, Tensor::zeros(&[hidden])?))?;
        params.push(Parameter::new(MLP_WEIGHT2, draw(hidden, d_out)?))?;
        params.push(Parameter::new(MLP_BIAS2, Tensor::zeros(&[d_out])?))?;
        Ok(Self {
            shape_in,
            shape_out,
            params,
        })
    }

    fn p(&self, id: &str) -> &Tensor {
        self.params.value(id).expect("mlp parameter present")
    }
}

impl Forecaster for PlainMlp {
    type Cache = MlpCache;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.shape_in {
            return Err(Error::dim("PlainMlp::forward", s, &self.shape_in));
        }
        let b = s[0];
        let flat = ops::reshape(x, &[b, self.shape_in.iter().product()])?;
        let pre = ops::linear(&flat, self.p(MLP_WEIGHT1), self.p(MLP_BIAS1))?;
        let act = ops::relu(&pre);
        let out = ops::linear(&act, self.p(MLP_WEIGHT2), self.p(MLP_BIAS2))?;
        let [p, e, d] = self.shape_out;
        let out = ops::reshape(&out, &[b, p, e, d])?;
        Ok((
            out,
            MlpCache {
                flat,
                pre,
                act,
                batch: b,
            },
        ))
    }

    fn backward(&self, cache: &MlpCache, d_out: &Tensor) -> Result<Gradients> {
        let d_out = ops::reshape(d_out, &[cache.batch, self.shape_out.iter().product()])?;
        let g2 = ops::linear_backward(&cache.act, self.p(MLP_WEIGHT2), &d_out)?;
        let d_pre = ops::relu_backward(&cache.pre, &g2.dx)?;
        let g1 = ops::linear_backward(&cache.flat, self.p(MLP_WEIGHT1), &d_pre)?;
        let mut in_shape = vec![cache.batch];
        in_shape.extend_from_slice(&self.shape_in);
        Ok(Gradients {
            params: vec![g1.dw, g1.db, g2.dw, g2.db],
            input: ops::reshape(&g1.dx, &in_shape)?,
        })
    }

    fn output_shape(&self, batch: usize) -> [usize; 4] {
        let [p, e, d] = self.shape_out;
        [batch, p, e, d]
    }
}

/// Data a baseline may be fitted on. Everything here is training-side
/// except `bin_of_day`, which is calendar metadata for every bin.
pub struct FitContext<'a> {
    /// `[T, E, F]` normalized flows.
    pub flows_norm: &'a Tensor,
    pub bin_of_day: &'a [usize],
    pub bins_per_day: usize,
    pub train_bins: usize,
    pub train: &'a [WindowSample],
    pub val: &'a [WindowSample],
    pub horizon: usize,
    pub train_config: &'a TrainConfig,
    pub mlp_hidden: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
enum Fitted {
    LastValue,
    HistoricalAverage(HistoricalAverage),
    PlainMlp(PlainMlp, TrainReport),
}

/// A baseline that must be fitted on the training split before use.
#[derive(Debug, Clone)]
pub struct Baseline {
    kind: BaselineKind,
    fitted: Option<Fitted>,
    horizon: usize,
    bin_of_day: Vec<usize>,
}

impl Baseline {
    pub fn new(kind: BaselineKind) -> Self {
        Self {
            kind,
            fitted: None,
            horizon: 0,
            bin_of_day: Vec::new(),
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn fit(&mut self, ctx: &FitContext<'_>) -> Result<()> {
        self.horizon = ctx.horizon;
        self.bin_of_day = ctx.bin_of_day.to_vec();
        self.fitted = Some(match self.kind {
            BaselineKind::LastValue => Fitted::LastValue,
            BaselineKind::HistoricalAverage => Fitted::HistoricalAverage(HistoricalAverage::fit(
                ctx.flows_norm,
                ctx.bin_of_day,
                ctx.bins_per_day,
                ctx.train_bins,
            )?),
            BaselineKind::PlainMlp => {
                let first = ctx
                    .train
                    .first()
                    .ok_or_else(|| Error::config("plain_mlp needs training samples"))?;
                let si = first.x.shape();
                let so = first.y.shape();
                let mlp = PlainMlp::new(
                    [si[0], si[1], si[2]],
                    [so[0], so[1], so[2]],
                    ctx.mlp_hidden,
                    ctx.seed,
                )?;
                let (mlp, report) = train(mlp, ctx.train, ctx.val, ctx.train_config, &mut ())?;
                Fitted::PlainMlp(mlp, report)
            }
        });
        Ok(())
    }

    /// Training report of the fitted MLP, if this is one.
    pub fn train_report(&self) -> Option<&TrainReport> {
        match &self.fitted {
            Some(Fitted::PlainMlp(_, r)) => Some(r),
            _ => None,
        }
    }

    /// Normalized predictions `[B, P, E, d_o]` for `samples`.
    pub fn predict(&self, samples: &[WindowSample]) -> Result<Tensor> {
        let fitted = self.fitted.as_ref().ok_or_else(|| {
            Error::Usage(format!(
                "baseline `{}` queried before fit",
                self.kind.name()
            ))
        })?;
        if samples.is_empty() {
            return Err(Error::config("no samples to predict"));
        }
        match fitted {
            Fitted::LastValue => {
                let xs: Vec<&Tensor> = samples.iter().map(|s| &s.x).collect();
                last_value_predict(&Tensor::stack(&xs)?, self.horizon)
            }
            Fitted::HistoricalAverage(ha) => ha.predict(samples, &self.bin_of_day, self.horizon),
            Fitted::PlainMlp(mlp, _) => {
                let xs: Vec<&Tensor> = samples.iter().map(|s| &s.x).collect();
                mlp.predict(&Tensor::stack(&xs)?)
            }
        }
    }
}
