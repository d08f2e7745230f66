use alloc::format;

use crate::error::{Error, Result};

/// Which axis the model treats as its entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityMode {
    /// One entity per origin station; its destination row is the feature vector.
    StationRows,
    /// The K busiest OD pairs, each a scalar series.
    TopKPairs(usize),
}

/// Architecture and initialization settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Station count N.
    pub stations: usize,
    /// History length H.
    pub history: usize,
    /// Horizon P.
    pub horizon: usize,
    pub input_dim: usize,
    pub adaptive_dim: usize,
    pub output_dim: usize,
    pub spatial_hidden: usize,
    pub use_input_embedding: bool,
    pub use_adaptive_embedding: bool,
    pub entity_mode: EntityMode,
    pub seed: u64,
}

pub const DEFAULT_INPUT_DIM: usize = 24;
pub const DEFAULT_ADAPTIVE_DIM: usize = 80;

impl ModelConfig {
    /// Station-row model with the default embedding sizes; output and
    /// mixing widths default to N.
    pub fn new(stations: usize, history: usize, horizon: usize) -> Self {
        Self {
            stations,
            history,
            horizon,
            input_dim: DEFAULT_INPUT_DIM,
            adaptive_dim: DEFAULT_ADAPTIVE_DIM,
            output_dim: stations,
            spatial_hidden: stations,
            use_input_embedding: true,
            use_adaptive_embedding: true,
            entity_mode: EntityMode::StationRows,
            seed: 0,
        }
    }

    /// Scalar-per-pair model over the `k` selected OD pairs.
    pub fn top_k_pairs(stations: usize, k: usize, history: usize, horizon: usize) -> Self {
        Self {
            output_dim: 1,
            spatial_hidden: k,
            entity_mode: EntityMode::TopKPairs(k),
            ..Self::new(stations, history, horizon)
        }
    }

    pub fn entities(&self) -> usize {
        match self.entity_mode {
            EntityMode::StationRows => self.stations,
            EntityMode::TopKPairs(k) => k,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.entity_mode {
            EntityMode::StationRows => self.stations,
            EntityMode::TopKPairs(_) => 1,
        }
    }

    /// Width of the concatenated embedding.
    pub fn hidden_dim(&self) -> usize {
        let a = if self.use_input_embedding {
            self.input_dim
        } else {
            0
        };
        let b = if self.use_adaptive_embedding {
            self.adaptive_dim
        } else {
            0
        };
        a + b
    }

    pub fn validate(&self) -> Result<()> {
        if !self.use_input_embedding && !self.use_adaptive_embedding {
            return Err(Error::config(
                "at least one of the input and adaptive embeddings must be enabled",
            ));
        }
        let dims = [
            ("stations", self.stations),
            ("history", self.history),
            ("horizon", self.horizon),
            ("input_dim", self.input_dim),
            ("adaptive_dim", self.adaptive_dim),
            ("output_dim", self.output_dim),
            ("spatial_hidden", self.spatial_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be at least 1")));
        }
        if let EntityMode::TopKPairs(k) = self.entity_mode {
            if k == 0 || k > self.stations * self.stations {
                return Err(Error::config(format!(
                    "K={k} must lie in 1..={}",
                    self.stations * self.stations
                )));
            }
        }
        Ok(())
    }

    /// Closed-form number of learnable scalars.
    pub fn parameter_count(&self) -> usize {
        let (e, f, h, p) = (
            self.entities(),
            self.feature_dim(),
            self.history,
            self.horizon,
        );
        let dh = self.hidden_dim();
        let mut n = 0;
        if self.use_input_embedding {
            n += (f + 1) * self.input_dim;
        }
        if self.use_adaptive_embedding {
            n += h * e * self.adaptive_dim;
        }
        n += 3 * dh * dh;
        n += (e + 1) * self.spatial_hidden + (self.spatial_hidden + 1) * e;
        n += (h * dh + 1) * p * self.output_dim;
        n
    }

    /// True when two configs describe the same parameter layout.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        ModelConfig { seed: 0, ..*self } == ModelConfig { seed: 0, ..*other }
    }
}
