use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Location, Observation, TaskId, TaskPoint};
use crate::kernels::{assemble_training_cov, jittered_cholesky};

use super::hyper::HyperParams;
use super::GpError;

/// One draw `y ~ N(0, K + Σ)` at every (location, task) pair, returned as a
/// homotopic dataset with sample ids `S01, S02, ...` in location order.
pub fn sample_prior(theta: &HyperParams, locations: &[Location], seed: u64) -> Result<Dataset, GpError> {
    let labels = (0..theta.n_tasks()).map(|i| format!("T{i}")).collect();
    sample_prior_labeled(theta, locations, labels, seed)
}

pub fn sample_prior_labeled(
    theta: &HyperParams,
    locations: &[Location],
    labels: Vec<String>,
    seed: u64,
) -> Result<Dataset, GpError> {
    let n = theta.n_tasks();
    if labels.len() != n {
        return Err(GpError::TaskCountMismatch {
            theta: n,
            data: labels.len(),
        });
    }
    let points: Vec<TaskPoint> = locations
        .iter()
        .flat_map(|&loc| (0..n).map(move |t| TaskPoint::new(TaskId(t), loc)))
        .collect();
    let (factor, spatial, noise) = theta.unpack();
    let k = assemble_training_cov(&points, &factor.task_cov(), &spatial, &noise, theta.mode())?;
    let (chol, _) = jittered_cholesky(&k)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(points.len(), (0..points.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let draw = chol.l() * z;

    let width = locations.len().to_string().len().max(2);
    let observations = points
        .iter()
        .zip(draw.iter())
        .enumerate()
        .map(|(idx, (p, &v))| {
            Observation::new(format!("S{:0width$}", idx / n + 1), p.location, p.task, v)
        })
        .collect();
    Ok(Dataset::with_labels(observations, labels)?)
}
