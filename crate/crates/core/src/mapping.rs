//! Grid maps, RMSE, and sequential-ingest evaluation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{Bounds, DataError, Dataset, Location, NormStats, Observation, TaskId, TaskPoint};
use crate::gp::{fit, fit_stgp_task, predict, task_correlations, FitConfig, FittedModel, GpError, PredictOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("grid has zero cells (bounds {width} x {height} m at resolution {resolution} m)")]
    EmptyGrid { width: f64, height: f64, resolution: f64 },
    #[error("grid resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("length mismatch: {predicted} predictions vs {truth} truth values")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("cannot compute RMSE of zero points")]
    NoPoints,
    #[error("truth has no values for task {0}")]
    TruthMissingTask(String),
    #[error("truth tasks {truth:?} do not match data tasks {data:?}")]
    TaskMismatch { truth: Vec<String>, data: Vec<String> },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("unknown method {0:?} (expected mtgp or stgp)")]
    UnknownMethod(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Regular grid of square cells over a rectangle. Cells are ordered
/// row-major starting at the `(min x, min y)` corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    bounds: Bounds,
    resolution: f64,
    ncols: usize,
    nrows: usize,
}

impl GridSpec {
    /// Whole cells that fit inside `bounds`.
    pub fn new(bounds: Bounds, resolution: f64) -> Result<Self, EvalError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(EvalError::BadResolution(resolution));
        }
        let count = |extent: f64| {
            if extent > 0.0 && extent.is_finite() {
                (extent / resolution + 1e-9).floor() as usize
            } else {
                0
            }
        };
        let (ncols, nrows) = (count(bounds.width()), count(bounds.height()));
        if ncols == 0 || nrows == 0 {
            return Err(EvalError::EmptyGrid {
                width: bounds.width(),
                height: bounds.height(),
                resolution,
            });
        }
        Ok(Self {
            bounds,
            resolution,
            ncols,
            nrows,
        })
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Center of cell `(row, col)`; row 0 is the southern row.
    pub fn cell_center(&self, row: usize, col: usize) -> Location {
        Location::new(
            self.bounds.min_x + (col as f64 + 0.5) * self.resolution,
            self.bounds.min_y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_centers(&self) -> Vec<Location> {
        (0..self.nrows)
            .flat_map(|r| (0..self.ncols).map(move |c| (r, c)))
            .map(|(r, c)| self.cell_center(r, c))
            .collect()
    }
}

/// Posterior mean and variance of one task over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyMap {
    pub task: TaskId,
    pub label: String,
    pub grid: GridSpec,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub normalized: bool,
}

/// One mean map and one variance map per task.
pub fn predict_map(model: &FittedModel, grid: &GridSpec, denormalize: bool) -> Result<Vec<PropertyMap>, EvalError> {
    let cells = grid.cell_centers();
    (0..model.n_tasks())
        .map(|t| {
            let task = TaskId(t);
            let queries: Vec<TaskPoint> = cells.iter().map(|&c| TaskPoint::new(task, c)).collect();
            let pred = predict(
                model,
                &queries,
                PredictOptions {
                    denormalize,
                    include_noise: false,
                },
            )?;
            Ok(PropertyMap {
                task,
                label: model.labels()[t].clone(),
                grid: *grid,
                mean: pred.mean,
                variance: pred.variance,
                normalized: !denormalize,
            })
        })
        .collect()
}

/// Truth points built from the means of a set of maps (one per task).
pub fn truth_from_maps(maps: &[PropertyMap]) -> Result<Dataset, EvalError> {
    let labels: Vec<String> = maps.iter().map(|m| m.label.clone()).collect();
    let mut observations = Vec::new();
    for (t, map) in maps.iter().enumerate() {
        for (i, (loc, &v)) in map.grid.cell_centers().iter().zip(&map.mean).enumerate() {
            observations.push(Observation::new(format!("G{i}"), *loc, TaskId(t), v));
        }
    }
    Ok(Dataset::with_labels(observations, labels)?)
}

/// `√(mean((p − t)²))`.
pub fn rmse(predicted: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::NoPoints);
    }
    let sum: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / predicted.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Mtgp,
    Stgp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mtgp => "mtgp",
            Method::Stgp => "stgp",
        })
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mtgp" => Ok(Method::Mtgp),
            "stgp" => Ok(Method::Stgp),
            other => Err(EvalError::UnknownMethod(other.to_string())),
        }
    }
}

/// Per-task RMSE after each number of ingested samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseCurve {
    pub method: Method,
    pub labels: Vec<String>,
    /// `curves[task]` is a list of `(k, rmse)` with strictly increasing `k`.
    pub curves: Vec<Vec<(usize, f64)>>,
}

impl RmseCurve {
    pub fn final_rmse(&self, task: TaskId) -> Option<f64> {
        self.curves.get(task.0)?.last().map(|&(_, r)| r)
    }
}

/// Fits `method` on `data` and predicts every truth point in original
/// units. Tasks without observations predict zero.
pub fn fit_and_predict(
    data: &Dataset,
    truth_points: &[TaskPoint],
    method: Method,
    config: &FitConfig,
) -> Result<Vec<f64>, EvalError> {
    let opts = PredictOptions {
        denormalize: true,
        include_noise: false,
    };
    let counts = data.task_counts();
    let observed: Vec<TaskId> = (0..data.n_tasks()).filter(|&t| counts[t] > 0).map(TaskId).collect();
    let mut out = vec![0.0; truth_points.len()];
    match method {
        Method::Mtgp => {
            let subset = if observed.len() == data.n_tasks() {
                data.clone()
            } else {
                data.restrict_tasks(&observed)?
            };
            let model = fit(&subset, config)?;
            let (idx, queries): (Vec<usize>, Vec<TaskPoint>) = truth_points
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let new = observed.iter().position(|t| *t == p.task)?;
                    Some((i, TaskPoint::new(TaskId(new), p.location)))
                })
                .unzip();
            let pred = predict(&model, &queries, opts)?;
            for (i, m) in idx.into_iter().zip(pred.mean) {
                out[i] = m;
            }
        }
        Method::Stgp => {
            for &task in &observed {
                let model = fit_stgp_task(data, task, config)?;
                let (idx, queries): (Vec<usize>, Vec<TaskPoint>) = truth_points
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.task == task)
                    .map(|(i, p)| (i, TaskPoint::new(TaskId(0), p.location)))
                    .unzip();
                let pred = predict(&model, &queries, opts)?;
                for (i, m) in idx.into_iter().zip(pred.mean) {
                    out[i] = m;
                }
            }
        }
    }
    Ok(out)
}

fn check_truth(data: &Dataset, truth: &Dataset) -> Result<(), EvalError> {
    if truth.labels() != data.labels() {
        return Err(EvalError::TaskMismatch {
            truth: truth.labels().to_vec(),
            data: data.labels().to_vec(),
        });
    }
    for (t, &c) in truth.task_counts().iter().enumerate() {
        if c == 0 {
            return Err(EvalError::TruthMissingTask(truth.labels()[t].clone()));
        }
    }
    Ok(())
}

/// Per-task RMSE in truth-normalized units: predictions and truth are both
/// z-scored with the truth's own per-task statistics.
pub fn rmse_by_task(predicted: &[f64], truth: &Dataset) -> Result<Vec<f64>, EvalError> {
    let stats = NormStats::from_dataset(truth);
    (0..truth.n_tasks())
        .map(|t| {
            let task = TaskId(t);
            let (p, y): (Vec<f64>, Vec<f64>) = truth
                .observations()
                .iter()
                .zip(predicted)
                .filter(|(o, _)| o.task == task)
                .map(|(o, &p)| (stats.normalize_value(task, p), stats.normalize_value(task, o.value)))
                .unzip();
            rmse(&p, &y)
        })
        .collect()
}

/// For each `k = 1..K`, refits `method` on the first `k` samples and records
/// per-task RMSE against `truth`.
pub fn sequential_eval(
    data: &Dataset,
    truth: &Dataset,
    method: Method,
    config: &FitConfig,
) -> Result<RmseCurve, EvalError> {
    check_truth(data, truth)?;
    let total = data.sample_ids().len();
    let truth_points = truth.points();
    let per_k: Vec<Vec<f64>> = (1..=total)
        .into_par_iter()
        .map(|k| {
            let prefix = data.prefix(k)?;
            let pred = fit_and_predict(&prefix, &truth_points, method, config)?;
            rmse_by_task(&pred, truth)
        })
        .collect::<Result<_, EvalError>>()?;
    let curves = (0..data.n_tasks())
        .map(|t| per_k.iter().enumerate().map(|(i, r)| (i + 1, r[t])).collect())
        .collect();
    Ok(RmseCurve {
        method,
        labels: data.labels().to_vec(),
        curves,
    })
}

/// Estimated `r_ij` for every task pair `i < j` as samples accumulate.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrajectory {
    pub labels: Vec<String>,
    pub pairs: Vec<PairTrajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTrajectory {
    pub i: usize,
    pub j: usize,
    pub points: Vec<(usize, f64)>,
}

/// Refits the multi-task model on every prefix in which all tasks have at
/// least one observation and records the off-diagonal correlations.
pub fn correlation_trajectory(data: &Dataset, config: &FitConfig) -> Result<CorrelationTrajectory, EvalError> {
    let total = data.sample_ids().len();
    if total < 2 {
        return Err(EvalError::TooFewSamples { needed: 2, got: total });
    }
    let per_k: Vec<Option<Vec<(usize, usize, f64)>>> = (1..=total)
        .into_par_iter()
        .map(|k| {
            let prefix = data.prefix(k)?;
            if prefix.task_counts().contains(&0) {
                return Ok(None);
            }
            let model = fit(&prefix, config)?;
            Ok(Some(task_correlations(&model).pairs()))
        })
        .collect::<Result<_, EvalError>>()?;
    let n = data.n_tasks();
    let mut pairs: Vec<PairTrajectory> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| PairTrajectory { i, j, points: Vec::new() }))
        .collect();
    for (idx, entry) in per_k.into_iter().enumerate() {
        if let Some(rs) = entry {
            for (pair, (_, _, r)) in pairs.iter_mut().zip(rs) {
                pair.points.push((idx + 1, r));
            }
        }
    }
    Ok(CorrelationTrajectory {
        labels: data.labels().to_vec(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((rmse(&[1.0, 1.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        let p = [0.3, -1.2, 4.0];
        let t = [1.0, 0.5, 2.0];
        let base = rmse(&p, &t).unwrap();
        let c = -2.5;
        let scaled = rmse(&p.map(|v| v * c), &t.map(|v| v * c)).unwrap();
        assert!((scaled - base * c.abs()).abs() < 1e-12);
        assert_eq!(rmse(&p, &t).unwrap(), rmse(&t, &p).unwrap());
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(rmse(&[], &[]), Err(EvalError::NoPoints)));
    }

    #[test]
    fn grid_shape() {
        let g = GridSpec::new(Bounds::new(0.0, 0.0, 300.0, 170.0), 5.0).unwrap();
        assert_eq!((g.ncols(), g.nrows()), (60, 34));
        assert_eq!(g.cell_count(), 2040);
        let cells = g.cell_centers();
        assert_eq!(cells[0], Location::new(2.5, 2.5));
        assert_eq!(cells[1], Location::new(7.5, 2.5));
        assert_eq!(cells[60], Location::new(2.5, 7.5));
        for c in &cells {
            assert!(c.x > 0.0 && c.x < 300.0 && c.y > 0.0 && c.y < 170.0);
        }
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(
            GridSpec::new(Bounds::new(0.0, 0.0, 0.0, 10.0), 1.0),
            Err(EvalError::EmptyGrid { .. })
        ));
        assert!(matches!(
            GridSpec::new(Bounds::new(0.0, 0.0, 4.0, 10.0), 5.0),
            Err(EvalError::EmptyGrid { .. })
        ));
        assert!(GridSpec::new(Bounds::new(0.0, 0.0, 10.0, 10.0), 0.0).is_err());
        let one = GridSpec::new(Bounds::new(0.0, 0.0, 5.0, 5.0), 5.0).unwrap();
        assert_eq!(one.cell_count(), 1);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("MTGP".parse::<Method>().unwrap(), Method::Mtgp);
        assert_eq!("stgp".parse::<Method>().unwrap(), Method::Stgp);
        assert!("kriging".parse::<Method>().is_err());
    }
}
