use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::series::{filter_operating_hours, ODSeries, OperatingWindow, SECONDS_PER_DAY};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};

/// Parameters of the synthetic metro generator.
///
/// `flows[t, i, j] = round(max(0, amp[i, j] · profile[t mod bins_per_day] + ε))`
/// with `ε ~ N(0, noise_std²)` drawn in row-major order from a ChaCha stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub stations: usize,
    pub days: usize,
    pub granularity: i64,
    /// Timestamp of the first bin; midnight-aligned keeps bin-of-day simple.
    pub start_time: i64,
    pub seed: u64,
    /// Row-major `[N, N]` base rates.
    pub pair_amplitudes: Vec<f64>,
    /// One multiplier per bin of the day.
    pub daily_profile: Vec<f64>,
    pub noise_std: f64,
    pub operating_window: Option<OperatingWindow>,
}

/// Smooth profile with two circular Gaussian bumps over a constant floor.
pub fn two_peak_profile(
    bins_per_day: usize,
    peak_bins: [usize; 2],
    heights: [f64; 2],
    width_bins: f64,
    base: f64,
) -> Vec<f64> {
    (0..bins_per_day)
        .map(|b| {
            let bump = |center: usize, height: f64| {
                let raw = b.abs_diff(center);
                let dist = raw.min(bins_per_day - raw) as f64;
                height * libm::exp(-0.5 * (dist / width_bins) * (dist / width_bins))
            };
            base + bump(peak_bins[0], heights[0]) + bump(peak_bins[1], heights[1])
        })
        .collect()
}

/// Uniform `[lo, hi)` rates with a zero diagonal (no same-station trips).
pub fn random_amplitudes(stations: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(stations * stations);
    for i in 0..stations {
        for j in 0..stations {
            let a: f64 = rng.random_range(lo..hi);
            out.push(if i == j { 0.0 } else { a });
        }
    }
    out
}

impl SyntheticSpec {
    /// 8 stations, 14 days of 30-minute bins, morning and evening peaks,
    /// service hours 06:00–23:00.
    pub fn demo(seed: u64) -> Self {
        let bins_per_day = (SECONDS_PER_DAY / 1800) as usize;
        Self {
            stations: 8,
            days: 14,
            granularity: 1800,
            start_time: 0,
            seed,
            pair_amplitudes: random_amplitudes(8, seed ^ 0x9e37_79b9_7f4a_7c15, 1.0, 6.0),
            daily_profile: two_peak_profile(bins_per_day, [16, 36], [1.0, 0.8], 2.0, 0.15),
            noise_std: 0.5,
            operating_window: Some(OperatingWindow::metro_default()),
        }
    }

    pub fn bins_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.granularity.max(1)) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations < 2 {
            return Err(Error::config(
                "synthetic network needs at least two stations",
            ));
        }
        if self.days == 0 {
            return Err(Error::config("synthetic series needs at least one day"));
        }
        if self.granularity <= 0 || SECONDS_PER_DAY % self.granularity != 0 {
            return Err(Error::config(format!(
                "granularity {} must divide one day",
                self.granularity
            )));
        }
        if self.pair_amplitudes.len() != self.stations * self.stations {
            return Err(Error::config(format!(
                "expected {} pair amplitudes, got {}",
                self.stations * self.stations,
                self.pair_amplitudes.len()
            )));
        }
        if self.daily_profile.len() != self.bins_per_day() {
            return Err(Error::config(format!(
                "daily profile needs {} entries, got {}",
                self.bins_per_day(),
                self.daily_profile.len()
            )));
        }
        let finite_nonneg = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.pair_amplitudes.iter().all(finite_nonneg)
            || !self.daily_profile.iter().all(finite_nonneg)
        {
            return Err(Error::config(
                "amplitudes and profile must be finite and nonnegative",
            ));
        }
        if !finite_nonneg(&self.noise_std) {
            return Err(Error::config("noise_std must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn station_names(&self) -> Vec<String> {
        (0..self.stations).map(|i| format!("S{i:02}")).collect()
    }
}

/// Deterministically renders a series from `spec`.
pub fn synth_generate(spec: &SyntheticSpec) -> Result<ODSeries> {
    spec.validate()?;
    let n = spec.stations;
    let bpd = spec.bins_per_day();
    let total = bpd * spec.days;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_std)
        .map_err(|e| Error::config(format!("noise distribution: {e}")))?;
    let mut data = Vec::with_capacity(total * n * n);
    for t in 0..total {
        let level = spec.daily_profile[t % bpd];
        for amp in &spec.pair_amplitudes {
            let eps = if spec.noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            data.push(libm::round((amp * level + eps).max(0.0)));
        }
    }
    let flows = Tensor::new(alloc::vec![total, n, n], data)?;
    let series = ODSeries::contiguous(
        spec.station_names(),
        spec.start_time,
        spec.granularity,
        flows,
    )?;
    match spec.operating_window {
        Some(w) => filter_operating_hours(&series, w),
        None => Ok(series),
    }
}
