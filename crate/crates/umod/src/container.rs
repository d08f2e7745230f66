//! Binary tensor container used for OD series (`UMODODS1`) and embedding
//! dumps (`UMODEMB1`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes
//! version    u32
//! meta_len   u64            byte length of the metadata block
//! metadata   labels         u32 count, then (u32 len, UTF-8) each
//!            start_time     i64
//!            granularity    i64
//!            shape          u32 rank, then u64 extents
//!            bin_starts     u64 count, then i64 each
//!            window         u8 flag, then start and end hour (u8) if set
//! data       f64 × prod(shape), row-major
//! ```

use std::fs;
use std::path::Path;

use umod_core::data::{ODSeries, OperatingWindow};
use umod_core::diffmath::Tensor;

use crate::binio::{element_count, Reader, Writer};
use crate::error::{Result, UmodError};

pub const SERIES_MAGIC: &[u8; 8] = b"UMODODS1";
pub const EMBEDDING_MAGIC: &[u8; 8] = b"UMODEMB1";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    /// Station ids for a series; entity names for an embedding.
    pub labels: Vec<String>,
    pub start_time: i64,
    pub granularity: i64,
    pub bin_starts: Vec<i64>,
    pub window: Option<OperatingWindow>,
    pub tensor: Tensor,
}

pub fn encode(magic: &[u8; 8], c: &Container) -> Vec<u8> {
    let mut meta = Writer::default();
    meta.u32(c.labels.len() as u32);
    for l in &c.labels {
        meta.str(l);
    }
    meta.i64(c.start_time);
    meta.i64(c.granularity);
    meta.dims(c.tensor.shape());
    meta.u64(c.bin_starts.len() as u64);
    for &b in &c.bin_starts {
        meta.i64(b);
    }
    match c.window {
        Some(w) => {
            meta.u8(1);
            meta.u8(w.start_hour);
            meta.u8(w.end_hour);
        }
        None => meta.u8(0),
    }

    let mut out = Writer::default();
    out.bytes(magic);
    out.u32(CONTAINER_VERSION);
    out.u64(meta.buf.len() as u64);
    out.bytes(&meta.buf);
    out.f64s(c.tensor.data());
    out.buf
}

pub fn decode(magic: &[u8; 8], what: &'static str, bytes: &[u8]) -> Result<Container> {
    let mut r = Reader::new(bytes, what);
    r.magic(magic)?;
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(UmodError::Version {
            what,
            found: version,
            expected: CONTAINER_VERSION,
        });
    }
    let meta_len = r.usize()?;
    let meta_start = r.pos();
    if meta_len > r.remaining() {
        return Err(r.error(
            meta_start - 8,
            format!("metadata length {meta_len} exceeds file"),
        ));
    }

    let count = r.u32()? as usize;
    let labels = (0..count).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let start_time = r.i64()?;
    let granularity = r.i64()?;
    let shape_at = r.pos();
    let shape = r.dims()?;
    let bins = r.usize()?;
    if bins > r.remaining() / 8 {
        return Err(r.error(r.pos() - 8, format!("bin count {bins} exceeds file")));
    }
    let bin_starts = (0..bins).map(|_| r.i64()).collect::<Result<Vec<_>>>()?;
    let flag_at = r.pos();
    let window = match r.u8()? {
        0 => None,
        1 => {
            let at = r.pos();
            let (s, e) = (r.u8()?, r.u8()?);
            Some(OperatingWindow::new(s, e).map_err(|e| r.error(at, e.to_string()))?)
        }
        f => return Err(r.error(flag_at, format!("window flag must be 0 or 1, got {f}"))),
    };
    if r.pos() - meta_start != meta_len {
        return Err(r.error(
            r.pos(),
            format!(
                "metadata block is {} bytes, header says {meta_len}",
                r.pos() - meta_start
            ),
        ));
    }

    let n = element_count(&r, shape_at, &shape)?;
    let data = r.f64s(n)?;
    r.finish()?;
    let tensor = Tensor::new(shape, data).map_err(|e| r.error(shape_at, e.to_string()))?;
    Ok(Container {
        labels,
        start_time,
        granularity,
        bin_starts,
        window,
        tensor,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| UmodError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| UmodError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| UmodError::io(path, e))
}

pub fn series_to_bytes(series: &ODSeries) -> Vec<u8> {
    encode(
        SERIES_MAGIC,
        &Container {
            labels: series.stations.clone(),
            start_time: series.start_time,
            granularity: series.granularity,
            bin_starts: series.bin_starts.clone(),
            window: series.operating_window,
            tensor: series.flows.clone(),
        },
    )
}

pub fn series_from_bytes(bytes: &[u8]) -> Result<ODSeries> {
    let c = decode(SERIES_MAGIC, "series file", bytes)?;
    let series = ODSeries {
        stations: c.labels,
        start_time: c.start_time,
        granularity: c.granularity,
        bin_starts: c.bin_starts,
        flows: c.tensor,
        operating_window: c.window,
    };
    series.validate()?;
    Ok(series)
}

pub fn write_series(path: &Path, series: &ODSeries) -> Result<()> {
    write_file(path, &series_to_bytes(series))
}

pub fn read_series(path: &Path) -> Result<ODSeries> {
    series_from_bytes(&read_file(path)?)
}

/// Writes one embedding table with a label per row of its entity axis.
pub fn write_embedding(path: &Path, labels: &[String], tensor: &Tensor) -> Result<()> {
    let c = Container {
        labels: labels.to_vec(),
        start_time: 0,
        granularity: 0,
        bin_starts: Vec::new(),
        window: None,
        tensor: tensor.clone(),
    };
    write_file(path, &encode(EMBEDDING_MAGIC, &c))
}

pub fn read_embedding(path: &Path) -> Result<(Vec<String>, Tensor)> {
    let c = decode(EMBEDDING_MAGIC, "embedding dump", &read_file(path)?)?;
    Ok((c.labels, c.tensor))
}
