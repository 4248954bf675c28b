//! File formats.
//!
//! * models: JSON `{"mu": .., "alpha": [..], "beta": [..]}`
//! * event sequences: CSV with a header line `t` and one time per line in
//!   ascending order; the horizon travels separately (sidecar JSON or flag)

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::model::{EventSequence, HawkesModel};

/// Sidecar carrying the horizon of an events CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventsSidecar {
    pub horizon: f64,
    pub count: usize,
}

pub fn read_model(path: &Path) -> Result<HawkesModel> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_model(model: &HawkesModel, path: &Path) -> Result<()> {
    write_json(model, path)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Parses the `t` column. Blank lines are ignored.
pub fn parse_event_times<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| HawkesError::InvalidEvents("empty events file".into()))?;
    if header.trim() != "t" {
        return Err(HawkesError::InvalidEvents(format!(
            "expected header \"t\", found {header:?}"
        )));
    }
    let mut times = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        let t: f64 = field.parse().map_err(|_| {
            HawkesError::InvalidEvents(format!("line {}: cannot parse {field:?}", i + 2))
        })?;
        times.push(t);
    }
    Ok(times)
}

pub fn write_event_times<W: Write>(events: &EventSequence, mut writer: W) -> Result<()> {
    writeln!(writer, "t")?;
    for t in events.times() {
        // shortest representation that round-trips exactly
        writeln!(writer, "{t:?}")?;
    }
    Ok(())
}

/// Reads an events CSV. The horizon is `horizon` if given, else the sidecar
/// `<path>.json` if present, else the last event time.
pub fn read_events(path: &Path, horizon: Option<f64>) -> Result<EventSequence> {
    let times = parse_event_times(fs::File::open(path)?)?;
    let horizon = match horizon {
        Some(h) => h,
        None => {
            let sidecar = sidecar_path(path);
            if sidecar.exists() {
                read_json::<EventsSidecar>(&sidecar)?.horizon
            } else {
                times.last().copied().unwrap_or(0.0)
            }
        }
    };
    EventSequence::new(times, horizon)
}

/// Writes the CSV and its horizon sidecar.
pub fn write_events(events: &EventSequence, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_event_times(events, &mut file)?;
    file.flush()?;
    write_json(
        &EventsSidecar {
            horizon: events.horizon(),
            count: events.len(),
        },
        &sidecar_path(path),
    )
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}
