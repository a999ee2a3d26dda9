//! Multi-task GP training and inference.

mod hyper;
mod lbfgs;
mod likelihood;
mod model;
mod prior;

use thiserror::Error;

use crate::data::DataError;
use crate::kernels::{KernelError, KernelMode, DEFAULT_NOISE_FLOOR};

pub use hyper::{HyperParams, ThetaLayout};
pub use likelihood::{lml_gradient, lml_gradient_fd, log_marginal_likelihood};
pub use model::{
    fit, fit_stgp, fit_stgp_task, predict, task_correlations, CorrelationMatrix, FittedModel, PredictOptions,
    PredictionResult,
};
pub use prior::{sample_prior, sample_prior_labeled};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("hyperparameters rejected: covariance not positive definite")]
    Rejected,
    #[error("hyperparameter vector has {got} entries, expected {expected}")]
    ThetaDimension { expected: usize, got: usize },
    #[error("hyperparameters describe {theta} tasks but data has {data}")]
    TaskCountMismatch { theta: usize, data: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("task {0} has no observations")]
    TaskWithoutObservations(String),
    #[error("unknown task id {0}")]
    UnknownTask(usize),
    #[error("all {0} optimizer restarts were rejected")]
    AllRestartsRejected(usize),
    #[error("invalid fit configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Finite-difference step used by [`GradientMode::FiniteDifference`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Convergence tolerance on the change in log marginal likelihood.
    pub tol: f64,
    pub seed: u64,
    pub mode: KernelMode,
    pub gradient: GradientMode,
    pub noise_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
            mode: KernelMode::Convolved,
            gradient: GradientMode::Analytic,
            noise_floor: DEFAULT_NOISE_FLOOR,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        if self.restarts == 0 {
            return Err(GpError::Config("restarts must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(GpError::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(GpError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.noise_floor > 0.0 && self.noise_floor.is_finite()) {
            return Err(GpError::Config(format!(
                "noise_floor must be positive, got {}",
                self.noise_floor
            )));
        }
        Ok(())
    }
}
