//! Versioned `key = value` model files.
//!
//! A model file carries the packed hyperparameters, normalization statistics
//! and a SHA-256 digest of the training observations. The posterior is not
//! stored: it is rebuilt from the training data, which must hash to the same
//! digest.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::{Dataset, NormStats};
use crate::gp::{FittedModel, HyperParams, ThetaLayout};
use crate::kernels::KernelMode;

use super::config::parse_pairs;
use super::{join_f64, observations_csv, parse_f64_list, read_text, write_atomic, IoError};

pub const MODEL_FORMAT: &str = "soilmap-model/1";

/// Hex SHA-256 of the dataset's canonical observation CSV.
pub fn dataset_digest(data: &Dataset) -> String {
    hex::encode(Sha256::digest(observations_csv(data).as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub labels: Vec<String>,
    pub mode: KernelMode,
    pub noise_floor: f64,
    pub theta: Vec<f64>,
    pub norm: NormStats,
    pub lml: f64,
    pub data_digest: String,
}

impl ModelFile {
    /// `data` must be the original-unit dataset the model was fitted on.
    pub fn from_model(model: &FittedModel, data: &Dataset) -> Self {
        let theta = model.hyperparams();
        Self {
            labels: model.labels().to_vec(),
            mode: theta.mode(),
            noise_floor: theta.layout().noise_floor,
            theta: theta.values().to_vec(),
            norm: model.norm_stats().clone(),
            lml: model.lml(),
            data_digest: dataset_digest(data),
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.len()
    }

    pub fn hyperparams(&self) -> Result<HyperParams, IoError> {
        let layout = ThetaLayout::new(self.n_tasks(), self.mode, self.noise_floor);
        Ok(HyperParams::from_values(layout, self.theta.clone())?)
    }

    /// Rebuilds the posterior, refusing data whose digest differs from the
    /// one recorded at fit time.
    pub fn rebuild(&self, data: &Dataset) -> Result<FittedModel, IoError> {
        let found = dataset_digest(data);
        if found != self.data_digest {
            return Err(IoError::DigestMismatch {
                expected: self.data_digest.clone(),
                found,
            });
        }
        Ok(FittedModel::from_hyperparams(self.hyperparams()?, data)?)
    }

    pub fn to_text(&self) -> String {
        format!(
            "format = {MODEL_FORMAT}\nn_tasks = {}\nlabels = {}\nmode = {}\nnoise_floor = {}\ntheta = {}\nnorm_mean = {}\nnorm_std = {}\nlml = {}\ndata_sha256 = {}\n",
            self.n_tasks(),
            self.labels.join(","),
            self.mode,
            self.noise_floor,
            join_f64(&self.theta),
            join_f64(&self.norm.mean),
            join_f64(&self.norm.std),
            self.lml,
            self.data_digest,
        )
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let pairs = parse_pairs(text)?;
        let get = |key: &str| -> Result<(usize, &str), IoError> {
            pairs
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(line, _, v)| (*line, v.as_str()))
                .ok_or_else(|| IoError::Model(format!("missing key {key:?}")))
        };
        if let Some((line, key, _)) = pairs.iter().find(|(_, k, _)| !Self::KEYS.contains(&k.as_str())) {
            return Err(IoError::Config {
                line: *line,
                message: format!("unknown key {key:?}"),
            });
        }
        let (_, format) = get("format")?;
        if format != MODEL_FORMAT {
            return Err(IoError::Model(format!("unsupported format {format:?}, expected {MODEL_FORMAT}")));
        }
        let floats = |key: &str| -> Result<Vec<f64>, IoError> {
            let (line, v) = get(key)?;
            parse_f64_list(v).map_err(|message| IoError::Config { line, message })
        };
        let scalar = |key: &str| -> Result<f64, IoError> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| IoError::Config {
                line,
                message: format!("invalid number {v:?} for {key}"),
            })
        };
        let (line, n) = get("n_tasks")?;
        let n_tasks: usize = n.parse().map_err(|_| IoError::Config {
            line,
            message: format!("invalid n_tasks {n:?}"),
        })?;
        let labels: Vec<String> = get("labels")?.1.split(',').map(|s| s.trim().to_string()).collect();
        let (line, mode) = get("mode")?;
        let mode = mode.parse().map_err(|e: crate::kernels::KernelError| IoError::Config {
            line,
            message: e.to_string(),
        })?;
        let file = Self {
            labels,
            mode,
            noise_floor: scalar("noise_floor")?,
            theta: floats("theta")?,
            norm: NormStats {
                mean: floats("norm_mean")?,
                std: floats("norm_std")?,
            },
            lml: scalar("lml")?,
            data_digest: get("data_sha256")?.1.to_string(),
        };
        if file.n_tasks() != n_tasks || file.norm.mean.len() != n_tasks || file.norm.std.len() != n_tasks {
            return Err(IoError::Model(format!(
                "n_tasks = {n_tasks} disagrees with labels or normalization entries"
            )));
        }
        file.hyperparams()?;
        Ok(file)
    }

    const KEYS: [&'static str; 10] = [
        "format",
        "n_tasks",
        "labels",
        "mode",
        "noise_floor",
        "theta",
        "norm_mean",
        "norm_std",
        "lml",
        "data_sha256",
    ];

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_text().as_bytes())
    }
}
