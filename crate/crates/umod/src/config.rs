//! The TOML run configuration. Every key is optional; omitted keys take the
//! defaults documented in the README.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umod_core::data::{
    random_amplitudes, two_peak_profile, OperatingWindow, SplitRatios, SyntheticSpec,
    SECONDS_PER_DAY,
};
use umod_core::eval::{Protocol, DEFAULT_HP_GRID, DIM_GRID};
use umod_core::model::{EntityMode, ModelConfig};
use umod_core::train::{LossKind, TrainConfig};

use crate::error::{Result, UmodError};

/// Salt separating the amplitude stream from the noise stream of a seed.
const AMPLITUDE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synthetic: SynthConfig,
    pub split: SplitConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Generate from the `[synthetic]` section.
    #[default]
    Synthetic,
    /// Read a series container from `series_path`.
    Series,
    /// Bin the records in `trips_path` over the stations in `stations_path`.
    Trips,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub series_path: Option<PathBuf>,
    pub trips_path: Option<PathBuf>,
    pub stations_path: Option<PathBuf>,
    /// Unix seconds; defaults to midnight UTC before the first trip.
    pub start_time: Option<i64>,
    /// Unix seconds, exclusive; defaults to midnight UTC after the last trip.
    pub end_time: Option<i64>,
    /// Bin width in seconds.
    pub granularity: i64,
    pub exclude_same_station: bool,
    pub apply_operating_hours: bool,
    /// `[start_hour, end_hour)` in UTC.
    pub operating_hours: [u8; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            series_path: None,
            trips_path: None,
            stations_path: None,
            start_time: None,
            end_time: None,
            granularity: 1800,
            exclude_same_station: false,
            apply_operating_hours: true,
            operating_hours: [6, 23],
        }
    }
}

impl DataConfig {
    pub fn window(&self) -> Result<Option<OperatingWindow>> {
        window_of(self.apply_operating_hours, self.operating_hours)
    }
}

fn window_of(apply: bool, hours: [u8; 2]) -> Result<Option<OperatingWindow>> {
    if !apply {
        return Ok(None);
    }
    Ok(Some(OperatingWindow::new(hours[0], hours[1])?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub stations: usize,
    pub days: usize,
    /// Bin width in seconds.
    pub granularity: i64,
    pub start_time: i64,
    pub seed: u64,
    /// Range of the uniformly drawn off-diagonal base rates (trips per bin).
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Explicit row-major `[N, N]` base rates; overrides the drawn ones.
    pub amplitudes: Option<Vec<f64>>,
    /// Hour of day of the two demand peaks.
    pub peak_hours: [f64; 2],
    pub peak_heights: [f64; 2],
    /// Gaussian width of each peak in hours.
    pub peak_width_hours: f64,
    /// Profile floor outside the peaks.
    pub base_level: f64,
    pub noise_std: f64,
    pub apply_operating_hours: bool,
    pub operating_hours: [u8; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stations: 8,
            days: 14,
            granularity: 1800,
            start_time: 0,
            seed: 0,
            amplitude_min: 1.0,
            amplitude_max: 6.0,
            amplitudes: None,
            peak_hours: [8.0, 18.0],
            peak_heights: [1.0, 0.8],
            peak_width_hours: 1.0,
            base_level: 0.15,
            noise_std: 0.5,
            apply_operating_hours: true,
            operating_hours: [6, 23],
        }
    }
}

impl SynthConfig {
    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        let g = self.granularity;
        if g <= 0 || SECONDS_PER_DAY % g != 0 {
            return Err(UmodError::Config(format!(
                "synthetic granularity {g}s must be positive and divide a day"
            )));
        }
        if self.stations < 2 {
            return Err(UmodError::Config(
                "synthetic network needs at least two stations".into(),
            ));
        }
        let bins_per_day = (SECONDS_PER_DAY / g) as usize;
        let hours_to_bins = |h: f64| h * 3600.0 / g as f64;
        let peak =
            |h: f64| (hours_to_bins(h).round() as i64).rem_euclid(bins_per_day as i64) as usize;
        let amplitudes = match &self.amplitudes {
            Some(a) => a.clone(),
            None => {
                if !(self.amplitude_min <= self.amplitude_max) {
                    return Err(UmodError::Config(
                        "amplitude_min exceeds amplitude_max".into(),
                    ));
                }
                random_amplitudes(
                    self.stations,
                    self.seed ^ AMPLITUDE_SALT,
                    self.amplitude_min,
                    self.amplitude_max,
                )
            }
        };
        let spec = SyntheticSpec {
            stations: self.stations,
            days: self.days,
            granularity: g,
            start_time: self.start_time,
            seed: self.seed,
            pair_amplitudes: amplitudes,
            daily_profile: two_peak_profile(
                bins_per_day,
                [peak(self.peak_hours[0]), peak(self.peak_hours[1])],
                self.peak_heights,
                hours_to_bins(self.peak_width_hours),
                self.base_level,
            ),
            noise_std: self.noise_std,
            operating_window: window_of(self.apply_operating_hours, self.operating_hours)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self {
            train: r.train,
            val: r.val,
            test: r.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntityModeName {
    #[default]
    StationRows,
    TopKPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub history: usize,
    pub horizon: usize,
    pub input_dim: usize,
    pub adaptive_dim: usize,
    /// Defaults to N (station rows) or 1 (pairs).
    pub output_dim: Option<usize>,
    /// Width of the entity-mixing layer; defaults to the entity count.
    pub spatial_hidden: Option<usize>,
    pub use_input_embedding: bool,
    pub use_adaptive_embedding: bool,
    pub entity_mode: EntityModeName,
    /// Pair count K for `top_k_pairs`.
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            history: 2,
            horizon: 2,
            input_dim: 24,
            adaptive_dim: 80,
            output_dim: None,
            spatial_hidden: None,
            use_input_embedding: true,
            use_adaptive_embedding: true,
            entity_mode: EntityModeName::StationRows,
            top_k: None,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, stations: usize) -> Result<ModelConfig> {
        let base = match self.entity_mode {
            EntityModeName::StationRows => ModelConfig::new(stations, self.history, self.horizon),
            EntityModeName::TopKPairs => {
                let k = self.top_k.ok_or_else(|| {
                    UmodError::Config("entity_mode = \"top_k_pairs\" requires model.top_k".into())
                })?;
                ModelConfig::top_k_pairs(stations, k, self.history, self.horizon)
            }
        };
        let cfg = ModelConfig {
            input_dim: self.input_dim,
            adaptive_dim: self.adaptive_dim,
            output_dim: self.output_dim.unwrap_or(base.output_dim),
            spatial_hidden: self.spatial_hidden.unwrap_or(base.spatial_hidden),
            use_input_embedding: self.use_input_embedding,
            use_adaptive_embedding: self.use_adaptive_embedding,
            seed: self.seed,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    #[default]
    Mae,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: LossName,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            lr: t.lr,
            max_epochs: t.max_epochs,
            patience: t.patience,
            loss: LossName::Mae,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            shuffle_seed: t.shuffle_seed,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            max_epochs: self.max_epochs,
            patience: self.patience,
            loss_kind: match self.loss {
                LossName::Mae => LossKind::MeanAbsolute,
                LossName::Mse => LossKind::MeanSquared,
            },
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            shuffle_seed: self.shuffle_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Targets with `|y|` at or below this (original units) are left out of MAPE.
    pub mape_threshold: f64,
    /// Hidden width of the plain MLP baseline.
    pub mlp_hidden: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            mape_threshold: umod_core::eval::DEFAULT_MAPE_THRESHOLD,
            mlp_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `[H, P]` pairs for the history/horizon sweep.
    pub hp_grid: Vec<[usize; 2]>,
    /// Widths for the embedding-dimension sweeps.
    pub dim_values: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            hp_grid: DEFAULT_HP_GRID.iter().map(|&(h, p)| [h, p]).collect(),
            dim_values: DIM_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Record wall-clock seconds in the epoch log; off keeps logs byte-stable.
    pub record_time: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/umod"),
            record_time: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| UmodError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration always serializes")
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UmodError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Joins every relative path onto `base`.
    pub fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.data.series_path,
            &mut self.data.trips_path,
            &mut self.data.stations_path,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.output.dir);
    }

    pub fn ratios(&self) -> Result<SplitRatios> {
        Ok(SplitRatios::new(
            self.split.train,
            self.split.val,
            self.split.test,
        )?)
    }

    /// Fills the data-dependent model defaults so the config names every
    /// value actually used.
    pub fn resolve(&mut self, stations: usize) -> Result<()> {
        let m = self.model.to_model_config(stations)?;
        self.model.output_dim = Some(m.output_dim);
        self.model.spatial_hidden = Some(m.spatial_hidden);
        if let EntityMode::TopKPairs(k) = m.entity_mode {
            self.model.top_k = Some(k);
        }
        Ok(())
    }

    pub fn protocol(&self, stations: usize) -> Result<Protocol> {
        Ok(Protocol {
            ratios: self.ratios()?,
            model: self.model.to_model_config(stations)?,
            train: self.train.to_train_config()?,
            mape_threshold: self.eval.mape_threshold,
            mlp_hidden: self.eval.mlp_hidden,
        })
    }
}
