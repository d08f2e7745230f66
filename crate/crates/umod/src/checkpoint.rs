//! Model checkpoints.
//!
//! ```text
//! magic     "UMODCKPT"
//! version   u32
//! config    u64 × 8: stations, history, horizon, input_dim, adaptive_dim,
//!                    output_dim, spatial_hidden, seed
//!           u8 × 2:  use_input_embedding, use_adaptive_embedding
//!           u8 mode (0 station rows, 1 top-K pairs), u64 K
//! params    u32 count, then per parameter:
//!           (u32 len, UTF-8 name), shape (u32 rank, u64 extents), f64 values
//! ```

use std::fs;
use std::path::Path;

use umod_core::diffmath::{ParamSet, Parameter};
use umod_core::model::{EntityMode, Forecaster, ModelConfig, Umod};

use crate::binio::{element_count, Reader, Writer};
use crate::container::write_file;
use crate::error::{Result, UmodError};
use umod_core::diffmath::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UMODCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const WHAT: &str = "checkpoint";

pub fn checkpoint_to_bytes(model: &Umod) -> Vec<u8> {
    let c = model.config();
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    for v in [
        c.stations,
        c.history,
        c.horizon,
        c.input_dim,
        c.adaptive_dim,
        c.output_dim,
        c.spatial_hidden,
    ] {
        w.u64(v as u64);
    }
    w.u64(c.seed);
    w.u8(c.use_input_embedding as u8);
    w.u8(c.use_adaptive_embedding as u8);
    match c.entity_mode {
        EntityMode::StationRows => {
            w.u8(0);
            w.u64(0);
        }
        EntityMode::TopKPairs(k) => {
            w.u8(1);
            w.u64(k as u64);
        }
    }
    let params = model.params();
    w.u32(params.len() as u32);
    for p in params.iter() {
        w.str(&p.id);
        w.dims(p.value.shape());
        w.f64s(p.value.data());
    }
    w.buf
}

fn flag(r: &mut Reader<'_>) -> Result<bool> {
    let at = r.pos();
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(r.error(at, format!("boolean flag must be 0 or 1, got {v}"))),
    }
}

/// Decodes a checkpoint into a model. Nothing is returned unless the whole
/// file parses and the parameters fit the stored configuration.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Umod> {
    let mut r = Reader::new(bytes, WHAT);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(UmodError::Version {
            what: WHAT,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config_at = r.pos();
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = r.usize()?;
    }
    let seed = r.u64()?;
    let use_input_embedding = flag(&mut r)?;
    let use_adaptive_embedding = flag(&mut r)?;
    let mode_at = r.pos();
    let entity_mode = match (r.u8()?, r.usize()?) {
        (0, _) => EntityMode::StationRows,
        (1, k) => EntityMode::TopKPairs(k),
        (m, _) => return Err(r.error(mode_at, format!("unknown entity mode {m}"))),
    };
    let [stations, history, horizon, input_dim, adaptive_dim, output_dim, spatial_hidden] = dims;
    let config = ModelConfig {
        stations,
        history,
        horizon,
        input_dim,
        adaptive_dim,
        output_dim,
        spatial_hidden,
        use_input_embedding,
        use_adaptive_embedding,
        entity_mode,
        seed,
    };
    config
        .validate()
        .map_err(|e| r.error(config_at, format!("stored configuration is invalid: {e}")))?;

    let count = r.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_at = r.pos();
        let name = r.str()?;
        let shape_at = r.pos();
        let shape = r.dims()?;
        let n = element_count(&r, shape_at, &shape)?;
        let values = r.f64s(n)?;
        let tensor = Tensor::new(shape, values).map_err(|e| r.error(shape_at, e.to_string()))?;
        params
            .push(Parameter::new(name, tensor))
            .map_err(|e| r.error(name_at, e.to_string()))?;
    }
    r.finish()?;
    Umod::from_params(config, params).map_err(|e| {
        r.error(
            config_at,
            format!("parameters do not fit the stored configuration: {e}"),
        )
    })
}

pub fn save_checkpoint(path: &Path, model: &Umod) -> Result<()> {
    write_file(path, &checkpoint_to_bytes(model))
}

/// Loads a checkpoint and, when `expected` is given, requires the stored
/// architecture to match it (the seed is not compared).
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Umod> {
    let bytes = fs::read(path).map_err(|e| UmodError::io(path, e))?;
    let model = checkpoint_from_bytes(&bytes)?;
    if let Some(want) = expected {
        if !model.config().same_architecture(want) {
            return Err(UmodError::ConfigMismatch(format!(
                "stored {:?}, configured {:?}",
                model.config(),
                want
            )));
        }
    }
    Ok(model)
}
