//! Multi-task Gaussian-process mapping of soil properties.
//!
//! Sparse point measurements of several correlated soil properties (pH, N,
//! P, K, ...) are modelled jointly with a free-form inter-task covariance and
//! per-task Matérn 3/2 spatial kernels. The crate covers:
//!
//! * [`data`]: observations, datasets, per-task normalization, sequential prefixes
//! * [`kernels`]: covariance functions and covariance-matrix assembly
//! * [`gp`]: marginal-likelihood fitting, prediction, task correlations, prior draws
//! * [`mapping`]: grid maps, RMSE, sequential evaluation, correlation trajectories
//! * [`mission`]: core mass / auger sizing and grid sample plans
//! * [`io`]: text file formats
//! * [`cli`]: the `soilmap` command line

pub mod data;
pub mod gp;
pub mod kernels;
pub mod mapping;
pub mod mission;
pub mod io;
pub mod cli;
