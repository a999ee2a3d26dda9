use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{normalize, Dataset, NormStats, TaskId, TaskPoint};
use crate::kernels::{assemble_cross_cov, assemble_training_cov, KernelMode, TaskCovariance};

use super::hyper::{HyperParams, ThetaLayout};
use super::lbfgs::{minimize, LbfgsSettings};
use super::likelihood::{analytic_gradient, evaluate, fd_gradient};
use super::{FitConfig, GpError, GradientMode, FD_STEP};

/// Trained model: hyperparameters plus the factorized training covariance.
#[derive(Debug, Clone)]
pub struct FittedModel {
    theta: HyperParams,
    data: Dataset,
    norm: NormStats,
    points: Vec<TaskPoint>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
    jitter: f64,
    restart_lmls: Vec<Option<f64>>,
    converged: bool,
}

impl FittedModel {
    /// Builds the posterior for fixed hyperparameters. `data` is in original
    /// units and is normalized here.
    pub fn from_hyperparams(theta: HyperParams, data: &Dataset) -> Result<Self, GpError> {
        let (normalized, norm) = normalize(data);
        Self::from_normalized(theta, normalized, norm, Vec::new(), false)
    }

    fn from_normalized(
        theta: HyperParams,
        data: Dataset,
        norm: NormStats,
        restart_lmls: Vec<Option<f64>>,
        converged: bool,
    ) -> Result<Self, GpError> {
        if theta.n_tasks() != data.n_tasks() {
            return Err(GpError::TaskCountMismatch {
                theta: theta.n_tasks(),
                data: data.n_tasks(),
            });
        }
        let points = data.points();
        let y = DVector::from_vec(data.values());
        let eval = evaluate(&theta, &points, &y)?;
        Ok(Self {
            theta,
            data,
            norm,
            points,
            chol: eval.chol,
            alpha: eval.alpha,
            lml: eval.lml,
            jitter: eval.jitter,
            restart_lmls,
            converged,
        })
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.theta
    }

    pub fn mode(&self) -> KernelMode {
        self.theta.mode()
    }

    pub fn n_tasks(&self) -> usize {
        self.theta.n_tasks()
    }

    pub fn labels(&self) -> &[String] {
        self.data.labels()
    }

    /// Training data in normalized units.
    pub fn training_data(&self) -> &Dataset {
        &self.data
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    pub fn task_cov(&self) -> TaskCovariance {
        self.theta.factor().task_cov()
    }

    pub fn lml(&self) -> f64 {
        self.lml
    }

    /// Diagonal jitter that was needed to factorize the training covariance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Final log marginal likelihood of every restart (`None` = rejected).
    /// Empty for models built from fixed hyperparameters.
    pub fn restart_lmls(&self) -> &[Option<f64>] {
        &self.restart_lmls
    }

    /// Lower Cholesky factor of `K + Σ_noise (+ jitter)`.
    /// Whether the winning restart met the optimizer's convergence test.
    /// False for models built from fixed hyperparameters, and for optima
    /// pressed against the region where the convolved kernel stops being
    /// positive semi-definite.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn cholesky_lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `α = (K + Σ)⁻¹ y`.
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Training covariance re-assembled from the hyperparameters.
    pub fn training_cov(&self) -> Result<DMatrix<f64>, GpError> {
        let (factor, spatial, noise) = self.theta.unpack();
        Ok(assemble_training_cov(&self.points, &factor.task_cov(), &spatial, &noise, self.mode())?)
    }
}

fn check_tasks_observed(data: &Dataset) -> Result<(), GpError> {
    for (task, count) in data.task_counts().into_iter().enumerate() {
        if count == 0 {
            return Err(GpError::TaskWithoutObservations(data.labels()[task].clone()));
        }
    }
    Ok(())
}

fn initial_points(layout: ThetaLayout, extent: f64, restarts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ((extent / 20.0).ln(), extent.ln());
    let noise0 = (0.05 - layout.noise_floor).max(layout.noise_floor).ln();
    (0..restarts)
        .map(|_| {
            let mut x = Vec::with_capacity(layout.dim());
            for i in 0..layout.n_tasks {
                for j in 0..=i {
                    if i == j {
                        x.push(0.0);
                    } else {
                        let z: f64 = rng.sample(StandardNormal);
                        x.push(0.1 * z);
                    }
                }
            }
            for _ in 0..layout.n_lengthscales() {
                x.push(rng.random_range(lo..=hi));
            }
            x.extend(std::iter::repeat_n(noise0, layout.n_tasks));
            x
        })
        .collect()
}

/// Fits hyperparameters by multi-start L-BFGS ascent of the log marginal
/// likelihood on normalized data. Deterministic for a given seed; the
/// restart with the highest likelihood wins, lowest index on ties.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FittedModel, GpError> {
    config.validate()?;
    check_tasks_observed(data)?;
    let (normalized, norm) = normalize(data);
    let layout = ThetaLayout::new(data.n_tasks(), config.mode, config.noise_floor);
    let extent = match data.field_bounds().extent() {
        e if e > 0.0 => e,
        _ => 1.0,
    };
    let points = normalized.points();
    let y = DVector::from_vec(normalized.values());

    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let theta = HyperParams::from_values(layout, x.to_vec()).ok()?;
        let eval = evaluate(&theta, &points, &y).ok()?;
        let grad = match config.gradient {
            GradientMode::Analytic => analytic_gradient(&theta, &points, &eval),
            GradientMode::FiniteDifference => fd_gradient(&theta, &points, &y, FD_STEP).ok()?,
        };
        Some((-eval.lml, grad.into_iter().map(|g| -g).collect()))
    };
    let settings = LbfgsSettings {
        max_iters: config.max_iters,
        f_tol: config.tol,
        ..Default::default()
    };

    let starts = initial_points(layout, extent, config.restarts, config.seed);
    let results: Vec<Option<(Vec<f64>, f64, bool)>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let r = minimize(objective, x0, settings)?;
            log::trace!(
                "restart {i}: lml {:.6} after {} iterations, |g| {:.2e}, converged {}",
                -r.f,
                r.iterations,
                r.grad_norm,
                r.converged
            );
            Some((r.x, -r.f, r.converged))
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some((_, lml, _)) = r {
            if best.is_none_or(|(_, b)| *lml > b) {
                best = Some((i, *lml));
            }
        }
    }
    let (best_index, _) = best.ok_or(GpError::AllRestartsRejected(config.restarts))?;
    let restart_lmls: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().map(|(_, l, _)| *l)).collect();
    let (x, _, converged) = results[best_index].clone().expect("best restart present");
    log::debug!("fit: best restart {best_index} of {}", config.restarts);
    FittedModel::from_normalized(HyperParams::from_values(layout, x)?, normalized, norm, restart_lmls, converged)
}

/// Independent single-task fit of one task.
pub fn fit_stgp_task(data: &Dataset, task: TaskId, config: &FitConfig) -> Result<FittedModel, GpError> {
    if task.0 >= data.n_tasks() {
        return Err(GpError::UnknownTask(task.0));
    }
    if !data.observations().iter().any(|o| o.task == task) {
        return Err(GpError::TaskWithoutObservations(data.labels()[task.0].clone()));
    }
    fit(&data.single_task(task)?, config)
}

/// One independent single-task model per task, in task order.
pub fn fit_stgp(data: &Dataset, config: &FitConfig) -> Result<Vec<FittedModel>, GpError> {
    (0..data.n_tasks())
        .map(|t| fit_stgp_task(data, TaskId(t), config))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PredictOptions {
    /// Map means and variances back to original task units.
    pub denormalize: bool,
    /// Add the task's observation-noise variance to the predictive variance.
    pub include_noise: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub denormalized: bool,
    /// Largest negative variance that was clamped to zero (0 if none).
    pub max_clamp: f64,
}

impl PredictionResult {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

const PREDICT_CHUNK: usize = 256;

/// Posterior mean and variance of each query's task at its location.
pub fn predict(model: &FittedModel, queries: &[TaskPoint], opts: PredictOptions) -> Result<PredictionResult, GpError> {
    let n = model.n_tasks();
    if let Some(q) = queries.iter().find(|q| q.task.0 >= n) {
        return Err(GpError::UnknownTask(q.task.0));
    }
    let (factor, spatial, noise) = model.theta.unpack();
    let kc = factor.task_cov();
    let mode = model.mode();

    let chunks: Vec<Result<Vec<(f64, f64, f64)>, GpError>> = queries
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| {
            let kstar = assemble_cross_cov(chunk, &model.points, &kc, &spatial, mode)?;
            let means = &kstar * &model.alpha;
            let v = model
                .chol
                .l_dirty()
                .solve_lower_triangular(&kstar.transpose())
                .ok_or(GpError::Rejected)?;
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(c, q)| {
                    let t = q.task.0;
                    let raw = kc.get(t, t) - v.column(c).norm_squared();
                    let clamp = if raw < 0.0 { -raw } else { 0.0 };
                    let mut var = raw.max(0.0);
                    if opts.include_noise {
                        var += noise.get(t);
                    }
                    (means[c], var, clamp)
                })
                .collect())
        })
        .collect();

    let mut result = PredictionResult {
        mean: Vec::with_capacity(queries.len()),
        variance: Vec::with_capacity(queries.len()),
        denormalized: opts.denormalize,
        max_clamp: 0.0,
    };
    let mut i = 0;
    for chunk in chunks {
        for (mean, var, clamp) in chunk? {
            let task = queries[i].task;
            i += 1;
            result.max_clamp = result.max_clamp.max(clamp);
            if opts.denormalize {
                result.mean.push(model.norm.denormalize_value(task, mean));
                result.variance.push(model.norm.denormalize_variance(task, var));
            } else {
                result.mean.push(mean);
                result.variance.push(var);
            }
        }
    }
    if result.max_clamp > 0.0 {
        log::debug!("predict: clamped negative variance of magnitude {:e}", result.max_clamp);
    }
    Ok(result)
}

/// Inter-task correlation coefficients `r_ij = K_c[i,j] / √(K_c[i,i] K_c[j,j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(DMatrix<f64>);

impl CorrelationMatrix {
    pub fn from_task_cov(kc: &TaskCovariance) -> Self {
        let n = kc.n_tasks();
        CorrelationMatrix(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                kc.get(i, j) / (kc.get(i, i).sqrt() * kc.get(j, j).sqrt())
            }
        }))
    }

    pub fn n_tasks(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Upper-triangle entries `(i, j, r_ij)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n_tasks();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.0[(i, j)]))
            .collect()
    }
}

pub fn task_correlations(model: &FittedModel) -> CorrelationMatrix {
    CorrelationMatrix::from_task_cov(&model.task_cov())
}
