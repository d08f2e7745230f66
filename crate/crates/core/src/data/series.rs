use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::diffmath::Tensor;
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;
/// Default bin width: 30 minutes.
pub const DEFAULT_GRANULARITY: i64 = 1_800;

/// One card-swipe journey.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripRecord {
    pub origin: String,
    pub destination: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
}

impl TripRecord {
    pub fn new(origin: impl Into<String>, destination: impl Into<String>, timestamp: i64) -> Self {
        Self {
            origin: origin.into(),
            destination: destination.into(),
            timestamp,
        }
    }
}

/// Ordered station ids with reverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationIndex {
    ids: Vec<String>,
    lookup: BTreeMap<String, usize>,
}

impl StationIndex {
    pub fn new<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let mut lookup = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate station id `{id}`")));
            }
        }
        if ids.len() < 2 {
            return Err(Error::config("a network needs at least two stations"));
        }
        Ok(Self { ids, lookup })
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Daily `[start_hour, end_hour)` window, hours in `0..=24`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatingWindow {
    pub start_hour: u8,
    pub end_hour: u8,
}

impl OperatingWindow {
    pub fn new(start_hour: u8, end_hour: u8) -> Result<Self> {
        if start_hour >= end_hour || end_hour > 24 {
            return Err(Error::config(format!(
                "operating window [{start_hour}:00, {end_hour}:00) is empty or out of range"
            )));
        }
        Ok(Self {
            start_hour,
            end_hour,
        })
    }

    /// Metro service hours: bins between 23:00 and 06:00 are dropped.
    pub fn metro_default() -> Self {
        Self {
            start_hour: 6,
            end_hour: 23,
        }
    }

    pub fn contains(&self, timestamp: i64) -> bool {
        let sod = timestamp.rem_euclid(SECONDS_PER_DAY);
        sod >= i64::from(self.start_hour) * 3600 && sod < i64::from(self.end_hour) * 3600
    }
}

/// Network OD flow over time: `flows[t, i, j]` trips from station `i` to `j`
/// starting in bin `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ODSeries {
    pub stations: Vec<String>,
    pub start_time: i64,
    pub granularity: i64,
    /// Start timestamp of every retained bin, strictly increasing.
    pub bin_starts: Vec<i64>,
    pub flows: Tensor,
    pub operating_window: Option<OperatingWindow>,
}

impl ODSeries {
    /// Builds a series with contiguous bins from `start_time`.
    pub fn contiguous(
        stations: Vec<String>,
        start_time: i64,
        granularity: i64,
        flows: Tensor,
    ) -> Result<Self> {
        let t = *flows.shape().first().unwrap_or(&0);
        let bin_starts = (0..t as i64)
            .map(|k| start_time + k * granularity)
            .collect();
        let s = Self {
            stations,
            start_time,
            granularity,
            bin_starts,
            flows,
            operating_window: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stations.len();
        if n < 2 {
            return Err(Error::config("a series needs at least two stations"));
        }
        if self.granularity <= 0 {
            return Err(Error::config("granularity must be positive"));
        }
        let shape = self.flows.shape();
        if shape.len() != 3 || shape[1] != n || shape[2] != n {
            return Err(Error::dim(
                "ODSeries",
                shape,
                &[self.bin_starts.len(), n, n],
            ));
        }
        if shape[0] != self.bin_starts.len() {
            return Err(Error::dim("ODSeries bins", shape, &[self.bin_starts.len()]));
        }
        if self.bin_starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("bin start times must be strictly increasing"));
        }
        if let Some(w) = self.operating_window {
            if let Some(&b) = self.bin_starts.iter().find(|&&b| !w.contains(b)) {
                return Err(Error::config(format!(
                    "bin starting at {b} lies outside the recorded operating window"
                )));
            }
        }
        Ok(())
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn num_bins(&self) -> usize {
        self.bin_starts.len()
    }

    pub fn total_flow(&self) -> f64 {
        self.flows.sum()
    }

    /// Bin slot within the day (0 at midnight), used for day-periodic baselines.
    pub fn bin_of_day(&self, t: usize) -> usize {
        (self.bin_starts[t].rem_euclid(SECONDS_PER_DAY) / self.granularity) as usize
    }

    pub fn bins_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.granularity).max(1) as usize
    }

    /// Keeps only the bins listed in `keep` (ascending).
    pub(crate) fn select_bins(&self, keep: &[usize]) -> Result<ODSeries> {
        let n = self.num_stations();
        let per = n * n;
        let mut data = Vec::with_capacity(keep.len() * per);
        for &t in keep {
            data.extend_from_slice(&self.flows.data()[t * per..(t + 1) * per]);
        }
        let flows = if keep.is_empty() {
            return Err(Error::config("no bins remain after selection"));
        } else {
            Tensor::new(alloc::vec![keep.len(), n, n], data)?
        };
        Ok(ODSeries {
            stations: self.stations.clone(),
            start_time: self.start_time,
            granularity: self.granularity,
            bin_starts: keep.iter().map(|&t| self.bin_starts[t]).collect(),
            flows,
            operating_window: self.operating_window,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Drop trips whose origin equals their destination.
    pub exclude_same_station: bool,
}

/// Result of binning trip records.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub series: ODSeries,
    /// Records outside `[start_time, end_time)`.
    pub dropped_out_of_span: usize,
    /// Same-station records removed under `exclude_same_station`.
    pub dropped_same_station: usize,
}

/// Counts trips per `(bin, origin, destination)` with half-open bins
/// `[start + k·g, start + (k+1)·g)`.
pub fn build_od_series(
    trips: &[TripRecord],
    stations: &StationIndex,
    start_time: i64,
    end_time: i64,
    granularity: i64,
    options: IngestOptions,
) -> Result<Ingested> {
    if start_time >= end_time {
        return Err(Error::config(format!(
            "start_time {start_time} must precede end_time {end_time}"
        )));
    }
    if granularity <= 0 || (end_time - start_time) % granularity != 0 {
        return Err(Error::config(format!(
            "granularity {granularity} does not divide the span {}",
            end_time - start_time
        )));
    }
    let bins = ((end_time - start_time) / granularity) as usize;
    let n = stations.len();
    let mut flows = Tensor::zeros(&[bins, n, n])?;
    let mut dropped_out_of_span = 0;
    let mut dropped_same_station = 0;
    for (pos, trip) in trips.iter().enumerate() {
        let o = stations
            .position(&trip.origin)
            .ok_or_else(|| Error::Ingest {
                position: pos,
                message: format!("unknown station id `{}`", trip.origin),
            })?;
        let d = stations
            .position(&trip.destination)
            .ok_or_else(|| Error::Ingest {
                position: pos,
                message: format!("unknown station id `{}`", trip.destination),
            })?;
        if trip.timestamp < start_time || trip.timestamp >= end_time {
            dropped_out_of_span += 1;
            continue;
        }
        if options.exclude_same_station && o == d {
            dropped_same_station += 1;
            continue;
        }
        let t = ((trip.timestamp - start_time) / granularity) as usize;
        let idx = (t * n + o) * n + d;
        flows.data_mut()[idx] += 1.0;
    }
    let series = ODSeries::contiguous(stations.ids().to_vec(), start_time, granularity, flows)?;
    Ok(Ingested {
        series,
        dropped_out_of_span,
        dropped_same_station,
    })
}

/// Deletes bins whose start falls outside the daily window.
pub fn filter_operating_hours(series: &ODSeries, window: OperatingWindow) -> Result<ODSeries> {
    let g = series.granularity;
    if SECONDS_PER_DAY % g != 0 {
        return Err(Error::config(format!(
            "granularity {g}s does not tile a day, cannot apply an hourly window"
        )));
    }
    let phase = series.start_time.rem_euclid(SECONDS_PER_DAY);
    for h in [window.start_hour, window.end_hour] {
        if (i64::from(h) * 3600 - phase).rem_euclid(g) != 0 {
            return Err(Error::config(format!(
                "window boundary {h}:00 is not aligned with {g}s bins"
            )));
        }
    }
    let keep: Vec<usize> = (0..series.num_bins())
        .filter(|&t| window.contains(series.bin_starts[t]))
        .collect();
    let mut out = series.select_bins(&keep)?;
    out.operating_window = Some(window);
    Ok(out)
}
