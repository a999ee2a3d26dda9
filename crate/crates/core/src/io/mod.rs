//! Text file formats: observation/location CSVs, run configuration, model
//! files, and map/curve exports.

mod config;
mod export;
mod model_file;
mod observations;
mod tables;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::DataError;
use crate::gp::GpError;
use crate::kernels::KernelError;
use crate::mapping::EvalError;
use crate::mission::PlanError;

pub use config::{RunConfig, SynthPrior};
pub use export::{
    correlation_matrix_csv, esri_ascii, map_csv, predictions_csv, rmse_curves_csv, trajectory_csv, write_map_exports,
};
pub use model_file::{dataset_digest, ModelFile, MODEL_FORMAT};
pub use observations::{
    observations_csv, parse_observations, read_observations, OBSERVATION_HEADER, MAX_TASKS,
};
pub use tables::{
    locations_csv, parse_boundary, parse_locations, parse_queries, read_boundary, read_locations, read_queries,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset")]
    Empty,
    #[error("row 1: header must be exactly `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}, column {column}: {message}")]
    Field {
        row: usize,
        column: &'static str,
        message: String,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("model file: {0}")]
    Model(String),
    #[error("training data digest {found} does not match model digest {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

/// Writes `contents` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    tmp.write_all(contents).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

/// Comma-joined full-precision decimals.
pub(crate) fn join_f64(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_f64_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect()
}
