use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::experiment::{prepare, run_prepared, Protocol};
use super::metrics::MetricsReport;
use crate::data::ODSeries;
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::model::{
    Forecaster, ModelConfig, Umod, ADAPTIVE_EMBEDDING, DEFAULT_ADAPTIVE_DIM, DEFAULT_INPUT_DIM,
    INPUT_WEIGHT,
};

/// The seven history/horizon pairs: long-short, long-medium, equal lengths,
/// and short-long.
pub const DEFAULT_HP_GRID: [(usize, usize); 7] =
    [(6, 2), (6, 4), (2, 2), (4, 4), (6, 6), (2, 4), (2, 6)];

pub const DIM_GRID: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimAxis {
    Input,
    Adaptive,
}

impl DimAxis {
    pub fn name(&self) -> &'static str {
        match self {
            DimAxis::Input => "input",
            DimAxis::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    HistoryHorizon,
    Ablation,
    Dimension(DimAxis),
}

/// One configuration to train.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpec {
    pub label: String,
    pub protocol: Protocol,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowOutcome {
    Metrics(MetricsReport),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    /// The exact model configuration that was trained.
    pub model: ModelConfig,
    pub outcome: RowOutcome,
}

impl SweepRow {
    pub fn metrics(&self) -> Option<&MetricsReport> {
        match &self.outcome {
            RowOutcome::Metrics(m) => Some(m),
            RowOutcome::Skipped(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
}

pub fn hp_rows(base: &Protocol, grid: &[(usize, usize)]) -> Vec<RowSpec> {
    grid.iter()
        .map(|&(h, p)| {
            let mut protocol = *base;
            protocol.model.history = h;
            protocol.model.horizon = p;
            RowSpec {
                label: format!("{h}-{p}"),
                protocol,
            }
        })
        .collect()
}

/// Full model, without the input embedding, without the adaptive embedding.
pub fn ablation_rows(base: &Protocol) -> Result<Vec<RowSpec>> {
    if !(base.model.use_input_embedding && base.model.use_adaptive_embedding) {
        return Err(Error::config(
            "ablations start from a model with both embeddings enabled",
        ));
    }
    let variant = |label: &str, input: bool, adaptive: bool| {
        let mut protocol = *base;
        protocol.model.use_input_embedding = input;
        protocol.model.use_adaptive_embedding = adaptive;
        RowSpec {
            label: label.into(),
            protocol,
        }
    };
    Ok(alloc::vec![
        variant("UMOD", true, true),
        variant("UMOD w/o E_i", false, true),
        variant("UMOD w/o E_a", true, false),
    ])
}

/// One row per value; the other embedding stays at its default width.
pub fn dim_rows(base: &Protocol, axis: DimAxis, values: &[usize]) -> Result<Vec<RowSpec>> {
    if let Some(v) = values.iter().find(|&&v| v == 0) {
        return Err(Error::config(format!(
            "embedding width {v} must be positive"
        )));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let mut protocol = *base;
            let (di, da) = match axis {
                DimAxis::Input => (v, DEFAULT_ADAPTIVE_DIM),
                DimAxis::Adaptive => (DEFAULT_INPUT_DIM, v),
            };
            protocol.model.input_dim = di;
            protocol.model.adaptive_dim = da;
            RowSpec {
                label: format!("{}={v}", axis.name()),
                protocol,
            }
        })
        .collect())
}

/// Trains one row. Windowing that the split sizes cannot support is
/// recorded as a skipped row rather than an error.
pub fn run_row(series: &ODSeries, spec: &RowSpec) -> Result<(SweepRow, Option<Umod>)> {
    let model = spec.protocol.model;
    let prepared = match prepare(series, &spec.protocol) {
        Ok(p) => p,
        Err(Error::Config(reason)) => {
            return Ok((
                SweepRow {
                    label: spec.label.clone(),
                    model,
                    outcome: RowOutcome::Skipped(reason),
                },
                None,
            ))
        }
        Err(e) => return Err(e),
    };
    let run = run_prepared(&prepared, &spec.protocol, &mut ())?;
    Ok((
        SweepRow {
            label: spec.label.clone(),
            model,
            outcome: RowOutcome::Metrics(run.test),
        },
        Some(run.model),
    ))
}

fn run_all(series: &ODSeries, kind: SweepKind, specs: &[RowSpec]) -> Result<SweepResult> {
    let rows = specs
        .iter()
        .map(|s| run_row(series, s).map(|(row, _)| row))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { kind, rows })
}

pub fn run_hp_sweep(
    series: &ODSeries,
    grid: &[(usize, usize)],
    base: &Protocol,
) -> Result<SweepResult> {
    run_all(series, SweepKind::HistoryHorizon, &hp_rows(base, grid))
}

/// Learned embedding tables of the full model, for external visualization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExport {
    /// `[H, E, d_a]`.
    pub adaptive: Tensor,
    /// `[F, d_i]`.
    pub input_weight: Tensor,
}

impl EmbeddingExport {
    pub fn from_model(model: &Umod) -> Result<Self> {
        let get = |id: &str| {
            model
                .params()
                .value(id)
                .cloned()
                .ok_or_else(|| Error::config(format!("model has no `{id}` parameter")))
        };
        Ok(Self {
            adaptive: get(ADAPTIVE_EMBEDDING)?,
            input_weight: get(INPUT_WEIGHT)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    pub result: SweepResult,
    /// `None` only if the full-model row was skipped.
    pub embeddings: Option<EmbeddingExport>,
}

pub fn run_ablations(series: &ODSeries, base: &Protocol) -> Result<AblationOutcome> {
    let specs = ablation_rows(base)?;
    let mut rows = Vec::with_capacity(specs.len());
    let mut embeddings = None;
    for (i, spec) in specs.iter().enumerate() {
        let (row, model) = run_row(series, spec)?;
        if i == 0 {
            embeddings = model
                .as_ref()
                .map(EmbeddingExport::from_model)
                .transpose()?;
        }
        rows.push(row);
    }
    Ok(AblationOutcome {
        result: SweepResult {
            kind: SweepKind::Ablation,
            rows,
        },
        embeddings,
    })
}

pub fn run_dim_sweep(
    series: &ODSeries,
    axis: DimAxis,
    values: &[usize],
    base: &Protocol,
) -> Result<SweepResult> {
    run_all(
        series,
        SweepKind::Dimension(axis),
        &dim_rows(base, axis, values)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn base() -> Protocol {
        Protocol {
            ratios: Default::default(),
            model: ModelConfig::new(4, 2, 2),
            train: Default::default(),
            mape_threshold: 1e-6,
            mlp_hidden: 8,
        }
    }

    #[test]
    fn grid_shapes() {
        let rows = hp_rows(&base(), &DEFAULT_HP_GRID);
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[2].label, "2-2");
        assert_eq!(rows[0].protocol.model.history, 6);
        assert_eq!(rows[0].protocol.model.horizon, 2);

        let rows = ablation_rows(&base()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(!rows[1].protocol.model.use_input_embedding);
        assert!(!rows[2].protocol.model.use_adaptive_embedding);

        let rows = dim_rows(&base(), DimAxis::Input, &DIM_GRID).unwrap();
        assert!(rows.iter().all(|r| r.protocol.model.adaptive_dim == 80));
        assert_eq!(
            rows.iter()
                .map(|r| r.protocol.model.input_dim)
                .collect::<Vec<_>>(),
            DIM_GRID
        );
        let rows = dim_rows(&base(), DimAxis::Adaptive, &DIM_GRID).unwrap();
        assert!(rows.iter().all(|r| r.protocol.model.input_dim == 24));
        assert!(dim_rows(&base(), DimAxis::Adaptive, &[0]).is_err());
    }

    #[test]
    fn ablation_requires_full_base() {
        let mut b = base();
        b.model.use_adaptive_embedding = false;
        assert!(ablation_rows(&b).is_err());
    }
}
