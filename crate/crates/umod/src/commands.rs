//! The subcommands as library functions; `main` only parses arguments and
//! prints.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use umod_core::data::{
    build_od_series, filter_operating_hours, IngestOptions, ODSeries, SECONDS_PER_DAY,
};
use umod_core::eval::{
    ablation_rows, dim_rows, evaluate_baseline, evaluate_forecaster, hp_rows, prepare, run_row,
    BaselineKind, DimAxis, EmbeddingExport, MetricsReport, Prepared, Protocol, RowOutcome, RowSpec,
    SweepKind, SweepResult, SweepRow,
};
use umod_core::model::Umod;
use umod_core::train::{train, EpochRecord, TrainObserver, TrainReport};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{DataConfig, DataSource, RunConfig, SynthConfig};
use crate::container::{read_series, write_embedding, write_file, write_series};
use crate::error::{Result, UmodError};
use crate::trips::{read_stations, read_trips};

pub const CONFIG_FILE: &str = "config.toml";
pub const EPOCH_LOG: &str = "epochs.log";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_METRICS_FILE: &str = "eval_metrics.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSummary {
    pub stations: usize,
    pub bins: usize,
    pub total_flow: f64,
}

impl SeriesSummary {
    pub fn of(series: &ODSeries) -> Self {
        Self {
            stations: series.num_stations(),
            bins: series.num_bins(),
            total_flow: series.total_flow(),
        }
    }
}

/// Reads a synthetic spec file (the keys of the `[synthetic]` section at top
/// level); `None` uses the defaults.
pub fn load_synth_spec(path: Option<&Path>) -> Result<SynthConfig> {
    match path {
        None => Ok(SynthConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| UmodError::io(p, e))?;
            toml::from_str(&text).map_err(|e| UmodError::Config(format!("{}: {e}", p.display())))
        }
    }
}

pub fn cmd_synth(spec: &SynthConfig, out: &Path) -> Result<SeriesSummary> {
    let series = umod_core::data::synth_generate(&spec.to_spec()?)?;
    write_series(out, &series)?;
    Ok(SeriesSummary::of(&series))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub series: SeriesSummary,
    pub dropped_out_of_span: usize,
    pub dropped_same_station: usize,
    /// Trips in bins removed by the operating-hours filter.
    pub dropped_off_hours: usize,
}

impl IngestSummary {
    pub fn dropped(&self) -> usize {
        self.dropped_out_of_span + self.dropped_same_station + self.dropped_off_hours
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| UmodError::Config(format!("data.{key} is required for this data source")))
}

/// Bins trip records into a series, applying the operating window if set.
pub fn ingest(
    trips_path: &Path,
    stations_path: &Path,
    data: &DataConfig,
) -> Result<(ODSeries, IngestSummary)> {
    let stations = read_stations(stations_path)?;
    let file = read_trips(trips_path)?;
    let g = data.granularity;
    let (start, end) = match (data.start_time, data.end_time) {
        (Some(s), Some(e)) => (s, e),
        (s, e) => {
            let lo = file.trips.iter().map(|t| t.timestamp).min();
            let hi = file.trips.iter().map(|t| t.timestamp).max();
            let (Some(lo), Some(hi)) = (lo, hi) else {
                return Err(UmodError::Config(format!(
                    "{} holds no trips; set data.start_time and data.end_time",
                    trips_path.display()
                )));
            };
            (
                s.unwrap_or(lo.div_euclid(SECONDS_PER_DAY) * SECONDS_PER_DAY),
                e.unwrap_or((hi.div_euclid(SECONDS_PER_DAY) + 1) * SECONDS_PER_DAY),
            )
        }
    };
    let options = IngestOptions {
        exclude_same_station: data.exclude_same_station,
    };
    let ingested =
        build_od_series(&file.trips, &stations, start, end, g, options).map_err(|e| match e {
            umod_core::Error::Ingest { position, message } => UmodError::Parse {
                path: trips_path.to_path_buf(),
                line: file.lines[position],
                message,
            },
            other => other.into(),
        })?;
    let mut series = ingested.series;
    let before = series.total_flow();
    if let Some(w) = data.window()? {
        series = filter_operating_hours(&series, w)?;
    }
    let dropped_off_hours = (before - series.total_flow()).round() as usize;
    let summary = IngestSummary {
        series: SeriesSummary::of(&series),
        dropped_out_of_span: ingested.dropped_out_of_span,
        dropped_same_station: ingested.dropped_same_station,
        dropped_off_hours,
    };
    Ok((series, summary))
}

pub fn cmd_ingest(
    trips: &Path,
    stations: &Path,
    data: &DataConfig,
    out: &Path,
) -> Result<IngestSummary> {
    let (series, summary) = ingest(trips, stations, data)?;
    write_series(out, &series)?;
    Ok(summary)
}

/// Materializes the series a run configuration points at.
pub fn load_series(cfg: &RunConfig) -> Result<ODSeries> {
    match cfg.data.source {
        DataSource::Synthetic => Ok(umod_core::data::synth_generate(&cfg.synthetic.to_spec()?)?),
        DataSource::Series => read_series(required(&cfg.data.series_path, "series_path")?),
        DataSource::Trips => Ok(ingest(
            required(&cfg.data.trips_path, "trips_path")?,
            required(&cfg.data.stations_path, "stations_path")?,
            &cfg.data,
        )?
        .0),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

/// Appends `epoch,train_loss,val_loss,seconds` lines as epochs finish.
pub struct EpochLog {
    file: File,
    path: PathBuf,
    clock: Option<Instant>,
    error: Option<std::io::Error>,
}

impl EpochLog {
    pub fn create(path: &Path, record_time: bool) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| UmodError::io(path, e))?;
        writeln!(file, "epoch,train_loss,val_loss,seconds").map_err(|e| UmodError::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            clock: record_time.then(Instant::now),
            error: None,
        })
    }

    fn finish(self) -> Result<()> {
        match self.error {
            Some(e) => Err(UmodError::io(self.path, e)),
            None => Ok(()),
        }
    }
}

impl TrainObserver for EpochLog {
    fn on_epoch(&mut self, r: &EpochRecord) {
        if self.error.is_none() {
            let line = format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.seconds
            );
            if let Err(e) = self.file.write_all(line.as_bytes()) {
                self.error = Some(e);
            }
        }
    }

    fn elapsed_seconds(&self) -> f64 {
        self.clock.map_or(0.0, |c| c.elapsed().as_secs_f64())
    }
}

fn fmt_mape(m: &MetricsReport) -> String {
    m.mape_percent
        .map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// `model,mae,rmse,mape_percent,n_total,n_mape_used`; MAPE is `NA` when
/// every target was masked.
pub fn metrics_table(rows: &[(String, MetricsReport)]) -> String {
    let mut s = String::from("model,mae,rmse,mape_percent,n_total,n_mape_used\n");
    for (name, m) in rows {
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{}",
            m.mae,
            m.rmse,
            fmt_mape(m),
            m.n_total,
            m.n_mape_used
        );
    }
    s
}

/// Resolves the config against its data and cuts the windows.
fn setup(cfg: &RunConfig) -> Result<(RunConfig, ODSeries, Protocol, Prepared)> {
    let series = load_series(cfg)?;
    let mut resolved = cfg.clone();
    resolved.resolve(series.num_stations())?;
    let protocol = resolved.protocol(series.num_stations())?;
    let prepared = prepare(&series, &protocol)?;
    Ok((resolved, series, protocol, prepared))
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub dir: PathBuf,
    pub report: TrainReport,
    pub test: MetricsReport,
}

/// Trains under `cfg` and writes the run directory: resolved config, epoch
/// log, best checkpoint and test metrics.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    let (resolved, _, protocol, prepared) = setup(cfg)?;
    let dir = resolved.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| UmodError::io(&dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &resolved.to_toml())?;

    let mut log = EpochLog::create(&dir.join(EPOCH_LOG), resolved.output.record_time)?;
    let model = Umod::new(protocol.model)?;
    let outcome = train(
        model,
        &prepared.splits.train,
        &prepared.splits.val,
        &protocol.train,
        &mut log,
    );
    let (model, report) = match outcome {
        Ok(v) => v,
        Err(failure) => {
            if let Some(best) = failure.best {
                let snapshot = Umod::from_params(protocol.model, best)?;
                save_checkpoint(&dir.join(CHECKPOINT_FILE), &snapshot)?;
            }
            log.finish()?;
            return Err(failure.error.into());
        }
    };
    log.finish()?;
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &model)?;
    let test = evaluate_forecaster(
        &model,
        &prepared.splits.test,
        &prepared.stats,
        protocol.mape_threshold,
        protocol.train.batch_size,
    )?;
    write_text(
        &dir.join(METRICS_FILE),
        &metrics_table(&[("umod".into(), test)]),
    )?;
    Ok(TrainArtifacts { dir, report, test })
}

/// Scores a checkpoint on the test split of the configured data, followed
/// by one row per requested baseline.
pub fn cmd_eval(
    cfg: &RunConfig,
    checkpoint: &Path,
    baselines: &[BaselineKind],
    out: Option<&Path>,
) -> Result<(PathBuf, Vec<(String, MetricsReport)>)> {
    if !checkpoint.exists() {
        return Err(UmodError::NotFound(checkpoint.to_path_buf()));
    }
    let (resolved, _, protocol, prepared) = setup(cfg)?;
    let model = load_checkpoint(checkpoint, Some(&protocol.model))?;
    let mut rows = vec![(
        "umod".to_string(),
        evaluate_forecaster(
            &model,
            &prepared.splits.test,
            &prepared.stats,
            protocol.mape_threshold,
            protocol.train.batch_size,
        )?,
    )];
    for &kind in baselines {
        rows.push((
            kind.name().to_string(),
            evaluate_baseline(kind, &prepared, &protocol)?,
        ));
    }
    let path = out.map_or_else(
        || resolved.output.dir.join(EVAL_METRICS_FILE),
        Path::to_path_buf,
    );
    write_text(&path, &metrics_table(&rows))?;
    Ok((path, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepCommand {
    HistoryHorizon,
    Ablation,
    Dimension(DimAxis),
}

impl SweepCommand {
    pub fn file_stem(&self) -> String {
        match self {
            SweepCommand::HistoryHorizon => "sweep_hp".into(),
            SweepCommand::Ablation => "sweep_ablate".into(),
            SweepCommand::Dimension(axis) => format!("sweep_dims_{}", axis.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepArtifacts {
    pub table: PathBuf,
    pub summary: PathBuf,
    /// Embedding dumps of the full model (ablation only).
    pub embeddings: Vec<PathBuf>,
    pub result: SweepResult,
}

fn run_specs(
    series: &ODSeries,
    specs: &[RowSpec],
    parallel: bool,
) -> Result<Vec<(SweepRow, Option<Umod>)>> {
    if !parallel {
        return specs
            .iter()
            .map(|s| run_row(series, s).map_err(UmodError::from))
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|s| scope.spawn(move || run_row(series, s)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .expect("sweep worker panicked")
                    .map_err(UmodError::from)
            })
            .collect()
    })
}

/// Column order: label, status, config fields, then the metrics.
pub fn sweep_table(result: &SweepResult) -> String {
    let mut s = String::from(
        "label,status,history,horizon,input_dim,adaptive_dim,use_input_embedding,\
         use_adaptive_embedding,seed,mae,rmse,mape_percent,n_mape_used\n",
    );
    for row in &result.rows {
        let m = &row.model;
        let status = match &row.outcome {
            RowOutcome::Metrics(_) => "ok".to_string(),
            RowOutcome::Skipped(reason) => format!("\"skipped: {}\"", reason.replace('"', "'")),
        };
        let _ = write!(
            s,
            "{},{status},{},{},{},{},{},{},{},",
            row.label,
            m.history,
            m.horizon,
            m.input_dim,
            m.adaptive_dim,
            m.use_input_embedding,
            m.use_adaptive_embedding,
            m.seed
        );
        match row.metrics() {
            Some(r) => {
                let _ = writeln!(s, "{},{},{},{}", r.mae, r.rmse, fmt_mape(r), r.n_mape_used);
            }
            None => s.push_str(",,,\n"),
        }
    }
    s
}

/// Names the lowest-error row for each metric.
pub fn sweep_summary(result: &SweepResult) -> String {
    let kind = match result.kind {
        SweepKind::HistoryHorizon => "history/horizon".to_string(),
        SweepKind::Ablation => "ablation".to_string(),
        SweepKind::Dimension(axis) => format!("{} embedding width", axis.name()),
    };
    let mut s = format!("{kind} sweep, {} rows\n", result.rows.len());
    let scored: Vec<(&SweepRow, &MetricsReport)> = result
        .rows
        .iter()
        .filter_map(|r| r.metrics().map(|m| (r, m)))
        .collect();
    let metrics: [(&str, fn(&MetricsReport) -> Option<f64>); 3] = [
        ("mae", |m| Some(m.mae)),
        ("rmse", |m| Some(m.rmse)),
        ("mape_percent", |m| m.mape_percent),
    ];
    for (name, get) in metrics {
        let best = scored
            .iter()
            .filter_map(|(r, m)| get(m).map(|v| (r, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((row, v)) => {
                let _ = writeln!(s, "best {name}: {} ({v})", row.label);
            }
            None => {
                let _ = writeln!(s, "best {name}: none");
            }
        }
    }
    for row in &result.rows {
        if let RowOutcome::Skipped(reason) = &row.outcome {
            let _ = writeln!(s, "skipped {}: {reason}", row.label);
        }
    }
    s
}

/// Entity labels of a prepared run: station ids, or `origin->destination`.
fn entity_labels(series: &ODSeries, prepared: &Prepared) -> Vec<String> {
    match &prepared.pairs {
        None => series.stations.clone(),
        Some(pairs) => pairs
            .iter()
            .map(|&(o, d)| format!("{}->{}", series.stations[o], series.stations[d]))
            .collect(),
    }
}

/// Runs one sweep and writes its table, summary and (for ablations) the
/// full model's embedding tables into the output directory.
pub fn cmd_sweep(cfg: &RunConfig, which: SweepCommand, parallel: bool) -> Result<SweepArtifacts> {
    let (resolved, series, base, prepared) = setup(cfg)?;
    let specs = match which {
        SweepCommand::HistoryHorizon => {
            let grid: Vec<(usize, usize)> = resolved
                .sweep
                .hp_grid
                .iter()
                .map(|&[h, p]| (h, p))
                .collect();
            hp_rows(&base, &grid)
        }
        SweepCommand::Ablation => ablation_rows(&base)?,
        SweepCommand::Dimension(axis) => dim_rows(&base, axis, &resolved.sweep.dim_values)?,
    };
    let kind = match which {
        SweepCommand::HistoryHorizon => SweepKind::HistoryHorizon,
        SweepCommand::Ablation => SweepKind::Ablation,
        SweepCommand::Dimension(axis) => SweepKind::Dimension(axis),
    };
    let outcomes = run_specs(&series, &specs, parallel)?;

    let dir = resolved.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| UmodError::io(&dir, e))?;
    write_text(&dir.join(CONFIG_FILE), &resolved.to_toml())?;
    let mut embeddings = Vec::new();
    if which == SweepCommand::Ablation {
        if let Some(Some(full)) = outcomes.first().map(|(_, m)| m) {
            let export = EmbeddingExport::from_model(full)?;
            let labels = entity_labels(&series, &prepared);
            let features = match &prepared.pairs {
                None => series.stations.clone(),
                Some(_) => vec!["flow".to_string()],
            };
            let adaptive = dir.join("embedding_adaptive.emb");
            let input = dir.join("embedding_input_weight.emb");
            write_embedding(&adaptive, &labels, &export.adaptive)?;
            write_embedding(&input, &features, &export.input_weight)?;
            embeddings = vec![adaptive, input];
        }
    }
    let result = SweepResult {
        kind,
        rows: outcomes.into_iter().map(|(row, _)| row).collect(),
    };
    let stem = which.file_stem();
    let table = dir.join(format!("{stem}.csv"));
    let summary = dir.join(format!("{stem}_summary.txt"));
    write_text(&table, &sweep_table(&result))?;
    write_text(&summary, &sweep_summary(&result))?;
    Ok(SweepArtifacts {
        table,
        summary,
        embeddings,
        result,
    })
}
