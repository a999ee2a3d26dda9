//! Flat `key = value` configuration files with `#` comments.

use std::path::Path;

use nalgebra::DMatrix;

use crate::gp::{FitConfig, GradientMode, HyperParams};
use crate::kernels::{KernelMode, NoiseParams, SpatialParams, TaskCholeskyFactor, DEFAULT_NOISE_FLOOR};

use super::{parse_f64_list, read_text, IoError};

pub(crate) fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, IoError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| IoError::Config {
            line,
            message: format!("expected key = value, found {content:?}"),
        })?;
        let key = key.trim().to_string();
        if out.iter().any(|(_, k, _)| *k == key) {
            return Err(IoError::Config {
                line,
                message: format!("duplicate key {key:?}"),
            });
        }
        out.push((line, key, value.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, IoError> {
    value.parse().map_err(|_| IoError::Config {
        line,
        message: format!("invalid value {value:?} for {key}"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, IoError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(IoError::Config {
            line,
            message: format!("invalid boolean {value:?} for {key}"),
        }),
    }
}

/// Fit and map settings. Every key is optional.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub resolution: f64,
    pub denormalize: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            resolution: 5.0,
            denormalize: false,
        }
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 9] = [
        "mode",
        "restarts",
        "seed",
        "max_iters",
        "tol",
        "resolution",
        "denormalize",
        "noise_floor",
        "gradient",
    ];

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = RunConfig::default();
        for (line, key, value) in parse_pairs(text)? {
            match key.as_str() {
                "mode" => {
                    cfg.fit.mode = value.parse().map_err(|e: crate::kernels::KernelError| IoError::Config {
                        line,
                        message: e.to_string(),
                    })?
                }
                "restarts" => cfg.fit.restarts = parse_value(line, &key, &value)?,
                "seed" => cfg.fit.seed = parse_value(line, &key, &value)?,
                "max_iters" => cfg.fit.max_iters = parse_value(line, &key, &value)?,
                "tol" => cfg.fit.tol = parse_value(line, &key, &value)?,
                "resolution" => cfg.resolution = parse_value(line, &key, &value)?,
                "denormalize" => cfg.denormalize = parse_bool(line, &key, &value)?,
                "noise_floor" => cfg.fit.noise_floor = parse_value(line, &key, &value)?,
                "gradient" => {
                    cfg.fit.gradient = match value.to_ascii_lowercase().as_str() {
                        "analytic" => GradientMode::Analytic,
                        "fd" | "finite_difference" | "finite-difference" => GradientMode::FiniteDifference,
                        _ => {
                            return Err(IoError::Config {
                                line,
                                message: format!("invalid gradient {value:?} (analytic or fd)"),
                            })
                        }
                    }
                }
                _ => {
                    return Err(IoError::Config {
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        cfg.fit.validate().map_err(|e| IoError::Config {
            line: 0,
            message: e.to_string(),
        })?;
        if !(cfg.resolution > 0.0 && cfg.resolution.is_finite()) {
            return Err(IoError::Config {
                line: 0,
                message: format!("resolution must be positive, got {}", cfg.resolution),
            });
        }
        Ok(cfg)
    }
}

/// Ground-truth prior used by `synth`: task covariance, length-scales,
/// noise, and the affine map from the zero-mean draw to field units.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPrior {
    pub labels: Vec<String>,
    pub mode: KernelMode,
    pub task_cov: DMatrix<f64>,
    pub lengthscales: Vec<f64>,
    pub noise: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Default for SynthPrior {
    /// pH, N, P, K with `r_pH,N = 0.9`, other pairs uncorrelated.
    fn default() -> Self {
        let mut kc = DMatrix::identity(4, 4);
        kc[(0, 1)] = 0.9;
        kc[(1, 0)] = 0.9;
        Self {
            labels: ["pH", "N", "P", "K"].map(String::from).to_vec(),
            mode: KernelMode::Convolved,
            task_cov: kc,
            lengthscales: vec![40.0, 40.0, 60.0, 80.0],
            noise: vec![0.05; 4],
            means: vec![6.2, 25.0, 30.0, 150.0],
            scales: vec![0.5, 8.0, 10.0, 40.0],
        }
    }
}

impl SynthPrior {
    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }

    /// Keys: `labels`, `mode`, `task_cov` (rows separated by `;`),
    /// `lengthscales`, `noise`, `means`, `scales`. Missing keys keep the
    /// defaults, which must then agree in task count.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut p = SynthPrior::default();
        let list = |line: usize, v: &str| parse_f64_list(v).map_err(|message| IoError::Config { line, message });
        for (line, key, value) in parse_pairs(text)? {
            match key.as_str() {
                "labels" => p.labels = value.split(',').map(|s| s.trim().to_string()).collect(),
                "mode" => {
                    p.mode = value.parse().map_err(|e: crate::kernels::KernelError| IoError::Config {
                        line,
                        message: e.to_string(),
                    })?
                }
                "task_cov" => {
                    let rows: Vec<Vec<f64>> =
                        value.split(';').map(|r| list(line, r)).collect::<Result<_, _>>()?;
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(IoError::Config {
                            line,
                            message: "task_cov must be square".into(),
                        });
                    }
                    p.task_cov = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                }
                "lengthscales" => p.lengthscales = list(line, &value)?,
                "noise" => p.noise = list(line, &value)?,
                "means" => p.means = list(line, &value)?,
                "scales" => p.scales = list(line, &value)?,
                _ => {
                    return Err(IoError::Config {
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        let n = p.labels.len();
        let lengths_ok = match p.mode {
            KernelMode::Icm => !p.lengthscales.is_empty(),
            KernelMode::Convolved => p.lengthscales.len() == n,
        };
        if p.task_cov.nrows() != n || !lengths_ok || p.noise.len() != n || p.means.len() != n || p.scales.len() != n {
            return Err(IoError::Config {
                line: 0,
                message: format!("prior entries disagree on the number of tasks ({n} labels)"),
            });
        }
        Ok(p)
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.len()
    }

    /// Packs the prior into a hyperparameter vector (Cholesky of `task_cov`).
    pub fn hyperparams(&self) -> Result<HyperParams, IoError> {
        let chol = self
            .task_cov
            .clone()
            .cholesky()
            .ok_or_else(|| IoError::Config {
                line: 0,
                message: "task_cov is not positive definite".into(),
            })?;
        let factor = TaskCholeskyFactor::from_lower(&chol.l())?;
        let spatial = SpatialParams::new(self.lengthscales.clone())?;
        let noise = NoiseParams::clamped(self.noise.clone(), DEFAULT_NOISE_FLOOR);
        Ok(HyperParams::pack(&factor, &spatial, &noise, self.mode, DEFAULT_NOISE_FLOOR)?)
    }
}
