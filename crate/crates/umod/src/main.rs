use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use umod::commands::{self, SweepCommand};
use umod::config::DataConfig;
use umod::umod_core::eval::{BaselineKind, DimAxis};
use umod::{Result, RunConfig, UmodError};

/// Metro origin-destination flow forecasting.
#[derive(Parser)]
#[command(name = "umod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic series file.
    Synth {
        /// TOML file with synthetic-generator keys; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bin trip records into a series file.
    Ingest {
        /// `origin,destination,unix_timestamp` records.
        #[arg(long)]
        trips: PathBuf,
        /// One station id per line.
        #[arg(long)]
        stations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run config whose `[data]` section supplies the binning settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        granularity: Option<i64>,
        #[arg(long)]
        start_time: Option<i64>,
        #[arg(long)]
        end_time: Option<i64>,
        /// Keep all hours of the day.
        #[arg(long)]
        no_window: bool,
        #[arg(long)]
        exclude_same_station: bool,
    },
    /// Train a model and write a run directory.
    Train(RunArgs),
    /// Score a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Series file to evaluate on instead of the configured data.
        #[arg(long)]
        series: Option<PathBuf>,
        /// Baselines to append, repeatable.
        #[arg(long = "baseline", value_enum)]
        baselines: Vec<BaselineArg>,
        /// Metrics table path; defaults to the output directory.
        #[arg(long = "metrics-out")]
        metrics_out: Option<PathBuf>,
    },
    /// Run an experiment sweep.
    Sweep {
        #[arg(value_enum)]
        kind: SweepArg,
        #[command(flatten)]
        run: RunArgs,
        /// Which embedding width to vary for `dims`.
        #[arg(long, value_enum, default_value = "input")]
        axis: AxisArg,
        /// Train rows on separate threads.
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum BaselineArg {
    LastValue,
    HistoricalAverage,
    PlainMlp,
}

impl From<BaselineArg> for BaselineKind {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::LastValue => BaselineKind::LastValue,
            BaselineArg::HistoricalAverage => BaselineKind::HistoricalAverage,
            BaselineArg::PlainMlp => BaselineKind::PlainMlp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Hp,
    Ablate,
    Dims,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Input,
    Adaptive,
}

fn print_metrics(rows: &[(String, umod::umod_core::eval::MetricsReport)]) {
    for (name, m) in rows {
        let mape = m
            .mape_percent
            .map_or("NA".to_string(), |v| format!("{v:.2}%"));
        println!(
            "{name:<20} mae {:.4}  rmse {:.4}  mape {mape}",
            m.mae, m.rmse
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = commands::load_synth_spec(spec.as_deref())?;
            let s = commands::cmd_synth(&spec, &out)?;
            println!(
                "N={} T_total={} total_flow={}",
                s.stations, s.bins, s.total_flow
            );
        }
        Command::Ingest {
            trips,
            stations,
            out,
            config,
            granularity,
            start_time,
            end_time,
            no_window,
            exclude_same_station,
        } => {
            let mut data = match config {
                Some(p) => RunConfig::load(&p)?.data,
                None => DataConfig::default(),
            };
            if let Some(g) = granularity {
                data.granularity = g;
            }
            data.start_time = start_time.or(data.start_time);
            data.end_time = end_time.or(data.end_time);
            data.apply_operating_hours &= !no_window;
            data.exclude_same_station |= exclude_same_station;
            let s = commands::cmd_ingest(&trips, &stations, &data, &out)?;
            println!(
                "N={} T_total={} total_flow={} dropped={} (out of span {}, same station {}, off hours {})",
                s.series.stations,
                s.series.bins,
                s.series.total_flow,
                s.dropped(),
                s.dropped_out_of_span,
                s.dropped_same_station,
                s.dropped_off_hours
            );
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let a = commands::cmd_train(&cfg)?;
            println!(
                "run directory {} (best epoch {} of {})",
                a.dir.display(),
                a.report.best_epoch,
                a.report.epochs.len()
            );
            print_metrics(&[("umod".into(), a.test)]);
        }
        Command::Eval {
            run,
            checkpoint,
            series,
            baselines,
            metrics_out,
        } => {
            let mut cfg = run.load()?;
            if let Some(s) = series {
                cfg.data.source = umod::config::DataSource::Series;
                cfg.data.series_path = Some(s);
            }
            let kinds: Vec<BaselineKind> = baselines.into_iter().map(Into::into).collect();
            let (path, rows) =
                commands::cmd_eval(&cfg, &checkpoint, &kinds, metrics_out.as_deref())?;
            print_metrics(&rows);
            println!("wrote {}", path.display());
        }
        Command::Sweep {
            kind,
            run,
            axis,
            parallel,
        } => {
            let cfg = run.load()?;
            let which = match kind {
                SweepArg::Hp => SweepCommand::HistoryHorizon,
                SweepArg::Ablate => SweepCommand::Ablation,
                SweepArg::Dims => SweepCommand::Dimension(match axis {
                    AxisArg::Input => DimAxis::Input,
                    AxisArg::Adaptive => DimAxis::Adaptive,
                }),
            };
            let a = commands::cmd_sweep(&cfg, which, parallel)?;
            print!("{}", commands::sweep_summary(&a.result));
            println!("wrote {}", a.table.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &UmodError) -> u8 {
    e.exit_code() as u8
}
