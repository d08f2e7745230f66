//! Trip ingestion, OD series, normalization, windowing and synthetic data.

mod series;
mod synth;
mod window;

pub use series::{
    build_od_series, filter_operating_hours, IngestOptions, Ingested, ODSeries, OperatingWindow,
    StationIndex, TripRecord, DEFAULT_GRANULARITY, SECONDS_PER_DAY,
};
pub use synth::{random_amplitudes, synth_generate, two_peak_profile, SyntheticSpec};
pub use window::{
    fit_normalizer, fit_normalizer_tensor, split_and_window, split_and_window_tensor, stack_batch,
    window_count, NormStats, SplitRatios, Splits, WindowSample,
};
