//! Small CSV tables: sample locations, prediction queries, field boundaries.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Location, TaskId, TaskPoint};
use crate::mission::{FieldBoundary, Polygon};

use super::{read_text, IoError};

fn records(text: &str, header: &str) -> Result<Vec<(usize, csv::StringRecord)>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut iter = reader.records();
    let first = match iter.next() {
        None => return Err(IoError::Empty),
        Some(r) => r.map_err(|e| IoError::Row {
            row: 1,
            message: e.to_string(),
        })?,
    };
    let found = first.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(IoError::Header {
            expected: header.into(),
            found,
        });
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, rec) in iter.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(IoError::Row {
                row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        out.push((row, rec));
    }
    if out.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(out)
}

fn coord(rec: &csv::StringRecord, idx: usize, row: usize, column: &'static str) -> Result<f64, IoError> {
    rec[idx]
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IoError::Field {
            row,
            column,
            message: format!("not a finite number: {:?}", &rec[idx]),
        })
}

/// `sample_id,x_m,y_m` rows.
pub fn parse_locations(text: &str) -> Result<(Vec<String>, Vec<Location>), IoError> {
    let mut ids = Vec::new();
    let mut locs = Vec::new();
    for (row, rec) in records(text, "sample_id,x_m,y_m")? {
        ids.push(rec[0].to_string());
        locs.push(Location::new(coord(&rec, 1, row, "x_m")?, coord(&rec, 2, row, "y_m")?));
    }
    Ok((ids, locs))
}

pub fn read_locations(path: &Path) -> Result<(Vec<String>, Vec<Location>), IoError> {
    parse_locations(&read_text(path)?)
}

pub fn locations_csv(ids: &[String], locations: &[Location]) -> String {
    let mut out = String::from("sample_id,x_m,y_m\n");
    for (id, l) in ids.iter().zip(locations) {
        let _ = writeln!(out, "{},{},{}", id, l.x, l.y);
    }
    out
}

/// `task,x_m,y_m` rows; task labels are resolved against `labels`.
pub fn parse_queries(text: &str, labels: &[String]) -> Result<Vec<TaskPoint>, IoError> {
    records(text, "task,x_m,y_m")?
        .into_iter()
        .map(|(row, rec)| {
            let task = labels.iter().position(|l| *l == rec[0]).ok_or_else(|| IoError::Field {
                row,
                column: "task",
                message: format!("unknown task label {:?}", &rec[0]),
            })?;
            Ok(TaskPoint::new(
                TaskId(task),
                Location::new(coord(&rec, 1, row, "x_m")?, coord(&rec, 2, row, "y_m")?),
            ))
        })
        .collect()
}

pub fn read_queries(path: &Path, labels: &[String]) -> Result<Vec<TaskPoint>, IoError> {
    parse_queries(&read_text(path)?, labels)
}

/// `ring,x_m,y_m` rows. Ring 0 is the field boundary; every other ring id is
/// an exclusion zone. Vertices keep file order within each ring.
pub fn parse_boundary(text: &str) -> Result<FieldBoundary, IoError> {
    let mut rings: Vec<(usize, Vec<Location>)> = Vec::new();
    for (row, rec) in records(text, "ring,x_m,y_m")? {
        let ring: usize = rec[0].parse().map_err(|_| IoError::Field {
            row,
            column: "ring",
            message: format!("not a ring index: {:?}", &rec[0]),
        })?;
        let loc = Location::new(coord(&rec, 1, row, "x_m")?, coord(&rec, 2, row, "y_m")?);
        match rings.iter_mut().find(|(r, _)| *r == ring) {
            Some((_, v)) => v.push(loc),
            None => rings.push((ring, vec![loc])),
        }
    }
    rings.sort_by_key(|(r, _)| *r);
    if rings[0].0 != 0 {
        return Err(IoError::Row {
            row: 2,
            message: "boundary file has no ring 0".into(),
        });
    }
    let mut polys = rings.into_iter().map(|(_, v)| Polygon::new(v));
    let boundary = polys.next().expect("ring 0 present")?;
    let exclusions = polys.collect::<Result<Vec<_>, _>>()?;
    Ok(FieldBoundary::new(boundary, exclusions))
}

pub fn read_boundary(path: &Path) -> Result<FieldBoundary, IoError> {
    parse_boundary(&read_text(path)?)
}
