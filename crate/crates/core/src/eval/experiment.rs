use alloc::format;
use alloc::vec::Vec;

use super::baselines::{Baseline, BaselineKind, FitContext};
use super::metrics::{compute_metrics, MetricsReport, DEFAULT_MAPE_THRESHOLD};
use crate::data::{
    fit_normalizer_tensor, split_and_window_tensor, NormStats, ODSeries, SplitRatios, Splits,
    WindowSample,
};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::model::{flatten_pairs, EntityMode, Forecaster, ModelConfig, Umod};
use crate::train::{train, TrainConfig, TrainObserver, TrainReport};

/// Everything that defines one train/evaluate run on a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub ratios: SplitRatios,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mape_threshold: f64,
    /// Hidden width of the plain MLP baseline.
    pub mlp_hidden: usize,
}

impl Protocol {
    /// Default protocol (7:1:2 split, H = P = 2, default widths) for a series.
    pub fn for_series(series: &ODSeries) -> Self {
        Self {
            ratios: SplitRatios::default(),
            model: ModelConfig::new(series.num_stations(), 2, 2),
            train: TrainConfig::default(),
            mape_threshold: DEFAULT_MAPE_THRESHOLD,
            mlp_hidden: 64,
        }
    }
}

/// Normalized, windowed data for one (entity mode, H, P).
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub stats: NormStats,
    pub splits: Splits,
    /// `[T, E, F]` before normalization.
    pub flows: Tensor,
    pub bin_of_day: Vec<usize>,
    pub bins_per_day: usize,
    /// Selected pairs in top-K mode.
    pub pairs: Option<Vec<(usize, usize)>>,
}

impl Prepared {
    pub fn flows_norm(&self) -> Tensor {
        self.stats.apply_tensor(&self.flows)
    }
}

/// Selects entities, fits the normalizer on the training bins and cuts
/// windows.
pub fn prepare(series: &ODSeries, protocol: &Protocol) -> Result<Prepared> {
    let m = &protocol.model;
    if m.stations != series.num_stations() {
        return Err(Error::config(format!(
            "model expects {} stations but the series has {}",
            m.stations,
            series.num_stations()
        )));
    }
    let train_fraction = protocol.ratios.train_fraction();
    let (flows, pairs) = match m.entity_mode {
        EntityMode::StationRows => (series.flows.clone(), None),
        EntityMode::TopKPairs(k) => {
            let view = flatten_pairs(series, k, train_fraction)?;
            (view.flows, Some(view.pairs))
        }
    };
    let stats = fit_normalizer_tensor(&flows, train_fraction)?;
    let splits = split_and_window_tensor(&flows, &stats, protocol.ratios, m.history, m.horizon)?;
    Ok(Prepared {
        stats,
        splits,
        flows,
        bin_of_day: (0..series.num_bins())
            .map(|t| series.bin_of_day(t))
            .collect(),
        bins_per_day: series.bins_per_day(),
        pairs,
    })
}

/// Runs `model` over `samples` in batches and stacks the predictions.
pub fn predict_all<M: Forecaster>(
    model: &M,
    samples: &[WindowSample],
    batch_size: usize,
) -> Result<Tensor> {
    if samples.is_empty() {
        return Err(Error::config("no samples to predict"));
    }
    let mut data = Vec::new();
    let mut shape = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let xs: Vec<&Tensor> = chunk.iter().map(|s| &s.x).collect();
        let y = model.predict(&Tensor::stack(&xs)?)?;
        if shape.is_empty() {
            shape = y.shape().to_vec();
        }
        data.extend_from_slice(y.data());
    }
    shape[0] = samples.len();
    Tensor::new(shape, data)
}

/// Stacked targets `[B, P, ...]`.
pub fn stack_targets(samples: &[WindowSample]) -> Result<Tensor> {
    let ys: Vec<&Tensor> = samples.iter().map(|s| &s.y).collect();
    Tensor::stack(&ys)
}

/// Test-style metrics of a trained model on `samples`.
pub fn evaluate_forecaster<M: Forecaster>(
    model: &M,
    samples: &[WindowSample],
    stats: &NormStats,
    mape_threshold: f64,
    batch_size: usize,
) -> Result<MetricsReport> {
    let pred = predict_all(model, samples, batch_size)?;
    compute_metrics(&pred, &stack_targets(samples)?, stats, mape_threshold)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: Umod,
    pub report: TrainReport,
    pub test: MetricsReport,
    pub stats: NormStats,
}

/// Trains a fresh model under `protocol` and scores it on the test split.
pub fn run_experiment<O: TrainObserver + ?Sized>(
    series: &ODSeries,
    protocol: &Protocol,
    observer: &mut O,
) -> Result<RunOutcome> {
    let prepared = prepare(series, protocol)?;
    run_prepared(&prepared, protocol, observer)
}

pub fn run_prepared<O: TrainObserver + ?Sized>(
    prepared: &Prepared,
    protocol: &Protocol,
    observer: &mut O,
) -> Result<RunOutcome> {
    let model = Umod::new(protocol.model)?;
    let (model, report) = train(
        model,
        &prepared.splits.train,
        &prepared.splits.val,
        &protocol.train,
        observer,
    )?;
    let test = evaluate_forecaster(
        &model,
        &prepared.splits.test,
        &prepared.stats,
        protocol.mape_threshold,
        protocol.train.batch_size,
    )?;
    Ok(RunOutcome {
        model,
        report,
        test,
        stats: prepared.stats,
    })
}

/// Fits a baseline on the training side of `prepared` and scores it on test.
pub fn evaluate_baseline(
    kind: BaselineKind,
    prepared: &Prepared,
    protocol: &Protocol,
) -> Result<MetricsReport> {
    let flows_norm = prepared.flows_norm();
    let ctx = FitContext {
        flows_norm: &flows_norm,
        bin_of_day: &prepared.bin_of_day,
        bins_per_day: prepared.bins_per_day,
        train_bins: prepared.splits.lengths[0],
        train: &prepared.splits.train,
        val: &prepared.splits.val,
        horizon: protocol.model.horizon,
        train_config: &protocol.train,
        mlp_hidden: protocol.mlp_hidden,
        seed: protocol.model.seed,
    };
    let mut baseline = Baseline::new(kind);
    baseline.fit(&ctx)?;
    let pred = baseline.predict(&prepared.splits.test)?;
    compute_metrics(
        &pred,
        &stack_targets(&prepared.splits.test)?,
        &prepared.stats,
        protocol.mape_threshold,
    )
}
