use std::collections::HashSet;
use std::path::Path;

use crate::data::{Dataset, Location, Observation, TaskId};

use super::{read_text, IoError};

pub const OBSERVATION_HEADER: &str = "sample_id,x_m,y_m,task,value";

/// Files with more distinct task labels than this are rejected.
pub const MAX_TASKS: usize = 16;

pub fn read_observations(path: &Path) -> Result<Dataset, IoError> {
    parse_observations(&read_text(path)?)
}

fn parse_number(field: &str, row: usize, column: &'static str) -> Result<f64, IoError> {
    let v: f64 = field.parse().map_err(|_| IoError::Field {
        row,
        column,
        message: format!("not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(IoError::Field {
            row,
            column,
            message: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

/// Parses `sample_id,x_m,y_m,task,value` CSV text. Task indices follow the
/// first appearance of each label; rows keep file order. Row numbers in
/// diagnostics count the header as row 1.
pub fn parse_observations(text: &str) -> Result<Dataset, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(IoError::Empty),
        Some(r) => r.map_err(|e| IoError::Row {
            row: 1,
            message: e.to_string(),
        })?,
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found != OBSERVATION_HEADER {
        return Err(IoError::Header {
            expected: OBSERVATION_HEADER.into(),
            found,
        });
    }

    let mut labels: Vec<String> = Vec::new();
    let mut observations = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut current: Option<String> = None;
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| IoError::Row {
            row,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 5 {
            return Err(IoError::Row {
                row,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let sample_id = record[0].to_string();
        if sample_id.is_empty() {
            return Err(IoError::Field {
                row,
                column: "sample_id",
                message: "empty sample id".into(),
            });
        }
        let x = parse_number(&record[1], row, "x_m")?;
        let y = parse_number(&record[2], row, "y_m")?;
        let label = &record[3];
        if label.is_empty() {
            return Err(IoError::Field {
                row,
                column: "task",
                message: "empty task label".into(),
            });
        }
        let value = parse_number(&record[4], row, "value")?;

        if current.as_deref() != Some(sample_id.as_str()) {
            if finished.contains(&sample_id) {
                return Err(IoError::Row {
                    row,
                    message: format!("rows for sample {sample_id:?} are not contiguous"),
                });
            }
            if let Some(prev) = current.replace(sample_id.clone()) {
                finished.insert(prev);
            }
        }

        let task = match labels.iter().position(|l| l == label) {
            Some(t) => t,
            None => {
                if labels.len() == MAX_TASKS {
                    return Err(IoError::Field {
                        row,
                        column: "task",
                        message: format!("more than {MAX_TASKS} distinct task labels"),
                    });
                }
                labels.push(label.to_string());
                labels.len() - 1
            }
        };
        observations.push(Observation::new(sample_id, Location::new(x, y), TaskId(task), value));
    }
    if observations.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(Dataset::with_labels(observations, labels)?)
}

/// Serializes a dataset in file order with full-precision values.
pub fn observations_csv(data: &Dataset) -> String {
    let mut out = String::with_capacity(32 * (data.len() + 1));
    out.push_str(OBSERVATION_HEADER);
    out.push('\n');
    for o in data.observations() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            o.sample_id,
            o.location.x,
            o.location.y,
            data.label(o.task),
            o.value
        ));
    }
    out
}
