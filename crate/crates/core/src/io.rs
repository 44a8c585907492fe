//! File formats.
//!
//! Scans and tracks are JSON lines. The first line of each file is a header
//! naming the format and its version; readers reject anything else.
//! Tabular outputs are CSV with a header row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Measurement, State};
use crate::metrics::Track;
use crate::sim::ScanData;

pub const FORMAT_VERSION: u32 = 1;
pub const SCANS_FORMAT: &str = "glmb-scans";
pub const TRACKS_FORMAT: &str = "glmb-tracks";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanRecord {
    scan: u32,
    measurements: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackRecord {
    id: String,
    states: Vec<[f64; 5]>,
}

fn write_jsonl<W: Write, T: Serialize>(w: W, format: &str, records: impl Iterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header = Header {
        format: format.to_string(),
        version: FORMAT_VERSION,
    };
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<R: Read, T: DeserializeOwned>(r: R, format: &str) -> Result<Vec<T>> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().transpose()?.ok_or(Error::Format {
        line: 1,
        message: "empty file, expected a header".into(),
    })?;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::Format {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != format || header.version != FORMAT_VERSION {
        return Err(Error::Format {
            line: 1,
            message: format!(
                "expected {format} version {FORMAT_VERSION}, found {} version {}",
                header.format, header.version
            ),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_scans<W: Write>(w: W, scans: &[ScanData]) -> Result<()> {
    write_jsonl(
        w,
        SCANS_FORMAT,
        scans.iter().map(|s| ScanRecord {
            scan: s.scan,
            measurements: s.measurements.iter().map(|z| [z[0], z[1]]).collect(),
        }),
    )
}

/// Reads scans and checks they are consecutive.
pub fn read_scans<R: Read>(r: R) -> Result<Vec<ScanData>> {
    let records: Vec<ScanRecord> = read_jsonl(r, SCANS_FORMAT)?;
    let mut scans = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        if let Some(prev) = scans.last().map(|s: &ScanData| s.scan) {
            if rec.scan != prev + 1 {
                return Err(Error::Format {
                    line: i + 2,
                    message: format!("scan {} follows scan {prev}", rec.scan),
                });
            }
        }
        scans.push(ScanData {
            scan: rec.scan,
            measurements: rec.measurements.iter().map(|z| Measurement::new(z[0], z[1])).collect(),
        });
    }
    Ok(scans)
}

pub fn write_tracks<W: Write>(w: W, tracks: &[Track]) -> Result<()> {
    write_jsonl(
        w,
        TRACKS_FORMAT,
        tracks.iter().map(|t| TrackRecord {
            id: t.id.clone(),
            states: t.iter().map(|(k, s)| [k as f64, s[0], s[1], s[2], s[3]]).collect(),
        }),
    )
}

pub fn read_tracks<R: Read>(r: R) -> Result<Vec<Track>> {
    let records: Vec<TrackRecord> = read_jsonl(r, TRACKS_FORMAT)?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut pairs = Vec::with_capacity(rec.states.len());
            for s in rec.states {
                if s[0] < 0.0 || s[0].fract() != 0.0 || s[0] > u32::MAX as f64 {
                    return Err(Error::Format {
                        line: i + 2,
                        message: format!("time {} is not a scan index", s[0]),
                    });
                }
                pairs.push((s[0] as u32, State::new(s[1], s[2], s[3], s[4])));
            }
            Ok(Track::from_pairs(rec.id, pairs))
        })
        .collect()
}

/// Writes rows as CSV with a header row taken from the field names.
pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read, T: DeserializeOwned>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Format {
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn create(path: &Path) -> Result<File> {
    Ok(File::create(path)?)
}

pub fn open(path: &Path) -> Result<File> {
    Ok(File::open(path)?)
}
