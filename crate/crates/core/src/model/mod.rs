//! The forecasting network and the pair-level entity view.

mod config;
mod pairs;
mod umod;

pub use config::{EntityMode, ModelConfig, DEFAULT_ADAPTIVE_DIM, DEFAULT_INPUT_DIM};
pub use pairs::{flatten_pairs, PairView};
pub use umod::{
    init_params, xavier_bound, ForwardActivations, Umod, UmodCache, ADAPTIVE_EMBEDDING, ATTN_KEY,
    ATTN_QUERY, ATTN_VALUE, HEAD_BIAS, HEAD_WEIGHT, INPUT_BIAS, INPUT_WEIGHT, MIX_BIAS1, MIX_BIAS2,
    MIX_WEIGHT1, MIX_WEIGHT2,
};

use alloc::vec::Vec;

use crate::diffmath::{ParamSet, Tensor};
use crate::error::Result;

/// Gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// One tensor per parameter, in [`ParamSet`] order.
    pub params: Vec<Tensor>,
    /// Gradient with respect to the input window.
    pub input: Tensor,
}

/// A differentiable window-to-horizon predictor over a parameter set.
pub trait Forecaster {
    type Cache;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Maps `[B, H, E, F]` to `[B, P, E, d_o]`, keeping what backward needs.
    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Self::Cache)>;

    fn backward(&self, cache: &Self::Cache, d_out: &Tensor) -> Result<Gradients>;

    fn output_shape(&self, batch: usize) -> [usize; 4];

    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }
}
