//! Delimited trip records and station lists.

use std::fs::File;
use std::path::Path;

use umod_core::data::{StationIndex, TripRecord};

use crate::error::{Result, UmodError};

/// Trips with the 1-based source line of each record.
#[derive(Debug, Clone, PartialEq)]
pub struct TripFile {
    pub trips: Vec<TripRecord>,
    pub lines: Vec<u64>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> UmodError {
    UmodError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads `origin,destination,unix_timestamp` records. A first line whose
/// timestamp field is not an integer is taken as a header.
pub fn read_trips(path: &Path) -> Result<TripFile> {
    let file = File::open(path).map_err(|e| UmodError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = TripFile {
        trips: Vec::new(),
        lines: Vec::new(),
    };
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 3 {
            return Err(parse_error(
                path,
                line,
                format!(
                    "expected 3 fields (origin,destination,unix_timestamp), found {}",
                    record.len()
                ),
            ));
        }
        let ts = match record[2].parse::<i64>() {
            Ok(ts) => ts,
            Err(_) if k == 0 => continue,
            Err(_) => {
                return Err(parse_error(
                    path,
                    line,
                    format!("`{}` is not a unix timestamp", &record[2]),
                ))
            }
        };
        if record[0].is_empty() || record[1].is_empty() {
            return Err(parse_error(path, line, "empty station id"));
        }
        out.trips.push(TripRecord::new(&record[0], &record[1], ts));
        out.lines.push(line);
    }
    Ok(out)
}

/// One station id per line; blank lines and `#` comments are skipped.
pub fn read_stations(path: &Path) -> Result<StationIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| UmodError::io(path, e))?;
    let ids: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    StationIndex::new(ids).map_err(|e| parse_error(path, 0, e.to_string()))
}
