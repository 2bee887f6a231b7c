//! Recording file: UTF-8 CSV with a header row.
//!
//! `subject_id, day_index, timestamp_s, rssi_01..rssi_20, acc_01..acc_06, room`;
//! an empty cell is a missing value (or an unlabeled row for `room`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::frame::{feature_names, Recording, SensorFrame, ACCEL_FEATURES, RSSI_FEATURES};
use super::vocab::RoomVocabulary;
use crate::error::{Error, Result};

pub fn header() -> Vec<String> {
    let mut h = vec!["subject_id".to_string(), "day_index".into(), "timestamp_s".into()];
    h.extend(feature_names());
    h.push("room".into());
    h
}

const COLUMNS: usize = 3 + RSSI_FEATURES + ACCEL_FEATURES + 1;

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: `{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {column}: non-finite value"),
        });
    }
    Ok(Some(v))
}

/// Parses recordings, grouped by `(subject, day)` and sorted by timestamp.
pub fn read_recordings<R: Read>(reader: R, vocab: &RoomVocabulary) -> Result<Vec<Recording>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let expected = header();
    let got: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header; expected {} columns starting `{}`", COLUMNS, expected[..3].join(",")),
        });
    }
    let names = feature_names();
    let mut groups: BTreeMap<(String, i64), Vec<SensorFrame>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != COLUMNS {
            return Err(Error::Parse {
                line,
                message: format!("expected {COLUMNS} columns, found {}", rec.len()),
            });
        }
        let subject_id = rec[0].to_string();
        if subject_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty subject_id".into(),
            });
        }
        let day_index: i64 = rec[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("day_index `{}` is not an integer", &rec[1]),
        })?;
        let timestamp: i64 = rec[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp_s `{}` is not an integer", &rec[2]),
        })?;
        let mut values = Vec::with_capacity(RSSI_FEATURES + ACCEL_FEATURES);
        for (k, name) in names.iter().enumerate() {
            values.push(parse_cell(&rec[3 + k], line, name)?);
        }
        let accel = values.split_off(RSSI_FEATURES);
        let room_cell = &rec[COLUMNS - 1];
        let room = if room_cell.is_empty() {
            None
        } else {
            Some(vocab.id(room_cell)?)
        };
        groups.entry((subject_id.clone(), day_index)).or_default().push(SensorFrame {
            timestamp,
            rssi: values,
            accel,
            room,
            subject_id,
            day_index,
            missing: false,
        });
    }
    Ok(groups
        .into_iter()
        .map(|((subject_id, day_index), mut frames)| {
            frames.sort_by_key(|f| f.timestamp);
            Recording {
                subject_id,
                day_index,
                frames,
            }
        })
        .collect())
}

pub fn load_recordings(path: impl AsRef<Path>, vocab: &RoomVocabulary) -> Result<Vec<Recording>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_recordings(std::io::BufReader::new(file), vocab)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes recordings in canonical form (shortest round-trip decimals).
pub fn write_recordings<W: Write>(writer: W, recordings: &[Recording], vocab: &RoomVocabulary) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::io("<csv writer>", std::io::Error::other(e.to_string()));
    w.write_record(header()).map_err(io)?;
    let mut row: Vec<String> = Vec::with_capacity(COLUMNS);
    for r in recordings {
        for f in &r.frames {
            if f.rssi.len() != RSSI_FEATURES || f.accel.len() != ACCEL_FEATURES {
                return Err(Error::dim(
                    "recording frame",
                    format!("{RSSI_FEATURES}+{ACCEL_FEATURES}"),
                    format!("{}+{}", f.rssi.len(), f.accel.len()),
                ));
            }
            row.clear();
            row.push(f.subject_id.clone());
            row.push(f.day_index.to_string());
            row.push(f.timestamp.to_string());
            row.extend(f.features().map(fmt_cell));
            row.push(f.room.map(|id| vocab.name(id).to_string()).unwrap_or_default());
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
