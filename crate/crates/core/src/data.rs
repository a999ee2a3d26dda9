//! Multi-task spatial observations.
//!
//! A [`Dataset`] is an ordered list of `(sample, location, task, value)`
//! measurements. Order matters: it is the order in which samples were
//! collected, and sequential replay ([`Dataset::prefix`]) walks it.

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("empty dataset")]
    Empty,
    #[error("n_tasks must be at least 1")]
    NoTasks,
    #[error("task out of range: observation {index} has task {task}, n_tasks = {n_tasks}")]
    TaskOutOfRange {
        index: usize,
        task: usize,
        n_tasks: usize,
    },
    #[error("observation {index}: non-finite {field}")]
    NonFinite { index: usize, field: &'static str },
    #[error("prefix length {k} out of range 1..={available}")]
    PrefixOutOfRange { k: usize, available: usize },
    #[error("expected {expected} task labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("duplicate task label {0:?}")]
    DuplicateLabel(String),
}

/// Planar position in local field meters (easting, northing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Location) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Dense task index in `0..n_tasks`. Labels live on the [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub usize);

/// A task/location pair: one row or column of a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskPoint {
    pub task: TaskId,
    pub location: Location,
}

impl TaskPoint {
    pub const fn new(task: TaskId, location: Location) -> Self {
        Self { task, location }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub sample_id: String,
    pub location: Location,
    pub task: TaskId,
    pub value: f64,
}

impl Observation {
    pub fn new(sample_id: impl Into<String>, location: Location, task: TaskId, value: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            location,
            task,
            value,
        }
    }

    pub fn point(&self) -> TaskPoint {
        TaskPoint::new(self.task, self.location)
    }
}

/// Axis-aligned rectangle in field meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn extent(&self) -> f64 {
        self.width().max(self.height())
    }

    fn enclosing<'a>(locations: impl IntoIterator<Item = &'a Location>) -> Option<Self> {
        locations.into_iter().fold(None, |acc, loc| {
            Some(match acc {
                None => Bounds::new(loc.x, loc.y, loc.x, loc.y),
                Some(b) => Bounds::new(
                    b.min_x.min(loc.x),
                    b.min_y.min(loc.y),
                    b.max_x.max(loc.x),
                    b.max_y.max(loc.y),
                ),
            })
        })
    }
}

/// Validated, insertion-ordered multi-task observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_tasks: usize,
    labels: Vec<String>,
    observations: Vec<Observation>,
    bounds: Bounds,
}

impl Dataset {
    /// Validates and wraps `observations`. Task labels default to `T0, T1, ...`.
    pub fn new(observations: Vec<Observation>, n_tasks: usize) -> Result<Self, DataError> {
        let labels = (0..n_tasks).map(|i| format!("T{i}")).collect();
        Self::with_labels(observations, labels)
    }

    pub fn with_labels(observations: Vec<Observation>, labels: Vec<String>) -> Result<Self, DataError> {
        let n_tasks = labels.len();
        if n_tasks == 0 {
            return Err(DataError::NoTasks);
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(DataError::DuplicateLabel(label.clone()));
            }
        }
        if observations.is_empty() {
            return Err(DataError::Empty);
        }
        for (index, obs) in observations.iter().enumerate() {
            if obs.task.0 >= n_tasks {
                return Err(DataError::TaskOutOfRange {
                    index,
                    task: obs.task.0,
                    n_tasks,
                });
            }
            if !obs.location.is_finite() {
                return Err(DataError::NonFinite {
                    index,
                    field: "coordinate",
                });
            }
            if !obs.value.is_finite() {
                return Err(DataError::NonFinite {
                    index,
                    field: "value",
                });
            }
        }
        let bounds = Bounds::enclosing(observations.iter().map(|o| &o.location))
            .expect("non-empty observations");
        Ok(Self {
            n_tasks,
            labels,
            observations,
            bounds,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, task: TaskId) -> &str {
        &self.labels[task.0]
    }

    pub fn task_by_label(&self, label: &str) -> Option<TaskId> {
        self.labels.iter().position(|l| l == label).map(TaskId)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Bounding rectangle of all observation locations.
    pub fn field_bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn points(&self) -> Vec<TaskPoint> {
        self.observations.iter().map(Observation::point).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.value).collect()
    }

    pub fn task_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_tasks];
        for obs in &self.observations {
            counts[obs.task.0] += 1;
        }
        counts
    }

    /// Distinct sample ids in order of first appearance.
    pub fn sample_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.observations
            .iter()
            .map(|o| o.sample_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// Observations belonging to the first `k` distinct sample ids.
    pub fn prefix(&self, k: usize) -> Result<Dataset, DataError> {
        let ids = self.sample_ids();
        if k == 0 || k > ids.len() {
            return Err(DataError::PrefixOutOfRange {
                k,
                available: ids.len(),
            });
        }
        let keep: HashSet<&str> = ids[..k].iter().copied().collect();
        let observations = self
            .observations
            .iter()
            .filter(|o| keep.contains(o.sample_id.as_str()))
            .cloned()
            .collect();
        Dataset::with_labels(observations, self.labels.clone())
    }

    /// Same dataset with every value replaced through `f(task, value)`.
    pub fn map_values(&self, f: impl Fn(TaskId, f64) -> f64) -> Dataset {
        let observations = self
            .observations
            .iter()
            .map(|o| Observation {
                value: f(o.task, o.value),
                ..o.clone()
            })
            .collect();
        Dataset {
            observations,
            ..self.clone()
        }
    }

    /// Observations of a single task, re-indexed as a one-task dataset.
    pub fn single_task(&self, task: TaskId) -> Result<Dataset, DataError> {
        let observations = self
            .observations
            .iter()
            .filter(|o| o.task == task)
            .map(|o| Observation {
                task: TaskId(0),
                ..o.clone()
            })
            .collect();
        Dataset::with_labels(observations, vec![self.labels[task.0].clone()])
    }

    /// Dataset over the listed tasks only, re-indexed in the given order.
    pub fn restrict_tasks(&self, tasks: &[TaskId]) -> Result<Dataset, DataError> {
        let observations = self
            .observations
            .iter()
            .filter_map(|o| {
                let new = tasks.iter().position(|t| *t == o.task)?;
                Some(Observation {
                    task: TaskId(new),
                    ..o.clone()
                })
            })
            .collect();
        let labels = tasks.iter().map(|t| self.labels[t.0].clone()).collect();
        Dataset::with_labels(observations, labels)
    }

    /// Keeps observations for which `keep` returns true.
    pub fn filter(&self, keep: impl Fn(&Observation) -> bool) -> Result<Dataset, DataError> {
        let observations = self.observations.iter().filter(|o| keep(o)).cloned().collect();
        Dataset::with_labels(observations, self.labels.clone())
    }
}

/// Per-task z-scoring statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(n_tasks: usize) -> Self {
        Self {
            mean: vec![0.0; n_tasks],
            std: vec![1.0; n_tasks],
        }
    }

    /// Statistics of `dataset`. Tasks with fewer than two observations (or
    /// zero spread) get `std = 1`; tasks with none get `mean = 0`.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let n = dataset.n_tasks();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for obs in dataset.observations() {
            sum[obs.task.0] += obs.value;
            count[obs.task.0] += 1;
        }
        let mean: Vec<f64> = sum
            .iter()
            .zip(&count)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        let mut sq = vec![0.0; n];
        for obs in dataset.observations() {
            let d = obs.value - mean[obs.task.0];
            sq[obs.task.0] += d * d;
        }
        let std = sq
            .iter()
            .zip(&count)
            .map(|(&s, &c)| {
                if c < 2 {
                    return 1.0;
                }
                let sd = (s / c as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn n_tasks(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_value(&self, task: TaskId, value: f64) -> f64 {
        (value - self.mean[task.0]) / self.std[task.0]
    }

    pub fn denormalize_value(&self, task: TaskId, value: f64) -> f64 {
        value * self.std[task.0] + self.mean[task.0]
    }

    pub fn denormalize_variance(&self, task: TaskId, variance: f64) -> f64 {
        variance * self.std[task.0] * self.std[task.0]
    }

    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        dataset.map_values(|t, v| self.normalize_value(t, v))
    }

    pub fn invert(&self, dataset: &Dataset) -> Dataset {
        dataset.map_values(|t, v| self.denormalize_value(t, v))
    }
}

/// Z-scores every task; returns the normalized copy and the statistics used.
pub fn normalize(dataset: &Dataset) -> (Dataset, NormStats) {
    let stats = NormStats::from_dataset(dataset);
    (stats.apply(dataset), stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homotopic(samples: usize, tasks: usize) -> Dataset {
        let mut obs = Vec::new();
        for s in 0..samples {
            for t in 0..tasks {
                obs.push(Observation::new(
                    format!("S{:02}", s + 1),
                    Location::new(s as f64 * 10.0, (s % 3) as f64 * 7.0),
                    TaskId(t),
                    (s * tasks + t) as f64 * 0.37 + t as f64,
                ));
            }
        }
        Dataset::new(obs, tasks).unwrap()
    }

    #[test]
    fn thirty_locations_four_tasks() {
        let d = homotopic(30, 4);
        assert_eq!(d.len(), 120);
        assert_eq!(d.n_tasks(), 4);
        assert_eq!(d.sample_ids().len(), 30);
    }

    #[test]
    fn empty_rejected() {
        assert_eq!(Dataset::new(vec![], 4).unwrap_err(), DataError::Empty);
        assert_eq!(Dataset::new(vec![], 4).unwrap_err().to_string(), "empty dataset");
    }

    #[test]
    fn task_out_of_range() {
        let obs = vec![Observation::new("S01", Location::new(0.0, 0.0), TaskId(4), 1.0)];
        let err = Dataset::new(obs, 4).unwrap_err();
        assert!(matches!(err, DataError::TaskOutOfRange { task: 4, .. }));
        assert!(err.to_string().contains("task out of range"));
    }

    #[test]
    fn non_finite_rejected() {
        let obs = vec![Observation::new("S01", Location::new(f64::NAN, 0.0), TaskId(0), 1.0)];
        assert!(matches!(
            Dataset::new(obs, 1),
            Err(DataError::NonFinite { field: "coordinate", .. })
        ));
        let obs = vec![Observation::new("S01", Location::new(0.0, 0.0), TaskId(0), f64::INFINITY)];
        assert!(matches!(Dataset::new(obs, 1), Err(DataError::NonFinite { field: "value", .. })));
    }

    #[test]
    fn insertion_order_preserved() {
        let d = homotopic(5, 3);
        let again = Dataset::new(d.observations().to_vec(), 3).unwrap();
        for (a, b) in d.observations().iter().zip(again.observations()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn normalize_two_values() {
        let obs = vec![
            Observation::new("a", Location::new(0.0, 0.0), TaskId(0), 2.0),
            Observation::new("b", Location::new(1.0, 0.0), TaskId(0), 4.0),
        ];
        let (n, stats) = normalize(&Dataset::new(obs, 1).unwrap());
        assert_eq!(n.values(), vec![-1.0, 1.0]);
        assert_eq!(stats.mean, vec![3.0]);
        assert_eq!(stats.std, vec![1.0]);
    }

    #[test]
    fn normalize_single_value_passes_through() {
        let obs = vec![Observation::new("a", Location::new(0.0, 0.0), TaskId(0), 7.0)];
        let (n, stats) = normalize(&Dataset::new(obs, 1).unwrap());
        assert_eq!(n.values(), vec![0.0]);
        assert_eq!(stats.std, vec![1.0]);
        assert_eq!(stats.mean, vec![7.0]);
    }

    #[test]
    fn normalize_moments_and_idempotence() {
        let d = homotopic(13, 3);
        let (n, _) = normalize(&d);
        let stats = NormStats::from_dataset(&n);
        for t in 0..3 {
            assert!(stats.mean[t].abs() < 1e-10);
            assert!((stats.std[t] - 1.0).abs() < 1e-10);
        }
        let (again, _) = normalize(&n);
        for (a, b) in again.values().iter().zip(n.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn prefix_counts() {
        let d = homotopic(30, 4);
        assert_eq!(d.prefix(30).unwrap(), d);
        let first = d.prefix(1).unwrap();
        assert!(first.observations().iter().all(|o| o.sample_id == "S01"));
        assert_eq!(first.len(), 4);
        assert_eq!(d.prefix(17).unwrap().len(), 68);
        assert!(d.prefix(0).is_err());
        assert!(d.prefix(31).is_err());
    }

    #[test]
    fn single_task_reindexes() {
        let d = homotopic(4, 3);
        let s = d.single_task(TaskId(2)).unwrap();
        assert_eq!(s.n_tasks(), 1);
        assert_eq!(s.len(), 4);
        assert_eq!(s.labels(), &["T2".to_string()]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dataset_strategy() -> impl Strategy<Value = Dataset> {
            (1usize..4, prop::collection::vec((0usize..6, -50.0f64..50.0, 0usize..4), 1..40)).prop_map(
                |(n_tasks, rows)| {
                    let obs = rows
                        .into_iter()
                        .enumerate()
                        .map(|(i, (sample, v, t))| {
                            Observation::new(
                                format!("S{sample}"),
                                Location::new(sample as f64, i as f64),
                                TaskId(t % n_tasks),
                                v * 1e3,
                            )
                        })
                        .collect();
                    Dataset::new(obs, n_tasks).unwrap()
                },
            )
        }

        proptest! {
            #[test]
            fn normalize_round_trip(d in dataset_strategy()) {
                let (n, stats) = normalize(&d);
                let back = stats.invert(&n);
                for (a, b) in back.values().iter().zip(d.values()) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }

            #[test]
            fn prefixes_nest(d in dataset_strategy(), a in 1usize..10, b in 1usize..10) {
                let total = d.sample_ids().len();
                let (a, b) = (a.min(total), b.min(total));
                let (lo, hi) = (a.min(b), a.max(b));
                let small = d.prefix(lo).unwrap();
                let big = d.prefix(hi).unwrap();
                let mut remaining: Vec<&Observation> = big.observations().iter().collect();
                for o in small.observations() {
                    let pos = remaining.iter().position(|r| *r == o);
                    prop_assert!(pos.is_some());
                    remaining.remove(pos.unwrap());
                }
            }
        }
    }
}
