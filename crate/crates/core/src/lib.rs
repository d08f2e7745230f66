//! Urban metro origin-destination flow forecasting.
//!
//! The crate is `no_std` with `alloc`: dense tensors with hand-derived
//! adjoints ([`diffmath`]), the OD data pipeline ([`data`]), the forecaster
//! itself ([`model`]), Adam training with early stopping ([`train`]) and
//! metrics plus experiment harnesses ([`eval`]). File formats and the
//! command line live in the companion `umod` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod diffmath;
mod error;
pub mod eval;
pub mod model;
pub mod train;

pub use error::{Error, Result};
