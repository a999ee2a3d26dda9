//! Spatial and inter-task covariance.
//!
//! Each task has its own Matérn 3/2 spatial kernel. Covariance between two
//! tasks with different length-scales uses the closed form obtained by
//! convolving the one-dimensional exponential basis functions whose
//! self-convolution gives the Matérn 3/2 kernel. The inter-task amplitude
//! matrix is free-form, `K_c = L Lᵀ`.
//!
//! Two assembly modes exist:
//!
//! * [`KernelMode::Icm`]: one shared length-scale, so the training covariance
//!   of homotopic data is exactly `K_c ⊗ K_s`.
//! * [`KernelMode::Convolved`]: entry `[(i,p),(j,q)] = K_c[i,j] · k̃_ij(‖x_p − x_q‖)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};
use thiserror::Error;

use crate::data::TaskPoint;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Relative length-scale difference below which the cross kernel falls back
/// to the single-task Matérn form.
pub const EQUAL_LENGTHSCALE_RTOL: f64 = 1e-6;

/// Diagonal jitter tried in order when factorizing a covariance matrix.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-9, 1e-8];

pub const DEFAULT_NOISE_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("length-scale must be positive and finite, got {0}")]
    BadLengthScale(f64),
    #[error("distance must be non-negative, got {0}")]
    BadDistance(f64),
    #[error("noise variance {value} below floor {floor}")]
    NoiseBelowFloor { value: f64, floor: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("task {task} out of range for {n_tasks} tasks")]
    TaskOutOfRange { task: usize, n_tasks: usize },
    #[error("covariance not positive definite after jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("unknown kernel mode {0:?} (expected icm or convolved)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelMode {
    Icm,
    #[default]
    Convolved,
}

impl fmt::Display for KernelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelMode::Icm => "icm",
            KernelMode::Convolved => "convolved",
        })
    }
}

impl FromStr for KernelMode {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "icm" | "kronecker" => Ok(KernelMode::Icm),
            "convolved" | "conv" => Ok(KernelMode::Convolved),
            other => Err(KernelError::UnknownMode(other.to_string())),
        }
    }
}

fn check_lengthscale(l: f64) -> Result<(), KernelError> {
    if l > 0.0 && l.is_finite() {
        Ok(())
    } else {
        Err(KernelError::BadLengthScale(l))
    }
}

fn check_distance(r: f64) -> Result<(), KernelError> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(KernelError::BadDistance(r))
    }
}

/// Unit-amplitude Matérn 3/2: `(1 + √3 r/l) exp(−√3 r/l)`.
pub fn matern32(r: f64, l: f64) -> Result<f64, KernelError> {
    check_distance(r)?;
    check_lengthscale(l)?;
    Ok(matern32_raw(r, l))
}

/// Unit-amplitude cross-task Matérn 3/2 between tasks with length-scales
/// `li` and `lj`. Symmetric in its length-scale arguments and equal to
/// [`matern32`] when they coincide.
pub fn cross_matern32(r: f64, li: f64, lj: f64) -> Result<f64, KernelError> {
    check_distance(r)?;
    check_lengthscale(li)?;
    check_lengthscale(lj)?;
    Ok(cross_matern32_raw(r, li, lj))
}

#[inline]
pub(crate) fn matern32_raw(r: f64, l: f64) -> f64 {
    let s = SQRT_3 * r / l;
    (1.0 + s) * (-s).exp()
}

/// d/dl of [`matern32_raw`].
#[inline]
pub(crate) fn matern32_dl(r: f64, l: f64) -> f64 {
    let s = SQRT_3 * r / l;
    s * s / l * (-s).exp()
}

#[inline]
pub(crate) fn cross_matern32_raw(r: f64, li: f64, lj: f64) -> f64 {
    let (a, b) = if li > lj { (lj, li) } else { (li, lj) };
    if (b - a) / b < EQUAL_LENGTHSCALE_RTOL {
        return matern32_raw(r, (a * b).sqrt());
    }
    let s = SQRT_3 * r;
    let p = 2.0 * (a * b).sqrt() / (a + b);
    let sb = s / b;
    p * (-sb).exp() * (1.0 + sb * expm1_ratio(s * (a - b) / (a * b)))
}

/// `expm1(d)/d`, continuous at zero.
#[inline]
fn expm1_ratio(d: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else {
        d.exp_m1() / d
    }
}

/// Derivative of [`expm1_ratio`].
#[inline]
fn expm1_ratio_deriv(d: f64) -> f64 {
    if d.abs() < 1e-3 {
        0.5 + d * (1.0 / 3.0 + d * (1.0 / 8.0 + d * (1.0 / 30.0 + d / 144.0)))
    } else {
        (d.exp() * (d - 1.0) + 1.0) / (d * d)
    }
}

/// Cross kernel value with partial derivatives `(k, ∂k/∂li, ∂k/∂lj)`.
///
/// Evaluated as `P · exp(−s/b) · (1 + (s/b)·expm1(δ)/δ)` with `a ≤ b` the
/// sorted length-scales, `s = √3 r`, `P = 2√(ab)/(a+b)` and
/// `δ = s(a − b)/(ab) ≤ 0`. This is algebraically the textbook
/// `2√(ab)/(a²−b²)·(a e^{−s/a} − b e^{−s/b})` without its cancellation.
pub(crate) fn cross_matern32_grad(r: f64, li: f64, lj: f64) -> (f64, f64, f64) {
    let swapped = li > lj;
    let (a, b) = if swapped { (lj, li) } else { (li, lj) };
    let (k, dka, dkb) = if (b - a) / b < EQUAL_LENGTHSCALE_RTOL {
        let l = (a * b).sqrt();
        let dl = matern32_dl(r, l);
        (matern32_raw(r, l), dl * 0.5 * (b / a).sqrt(), dl * 0.5 * (a / b).sqrt())
    } else {
        let s = SQRT_3 * r;
        let sum = a + b;
        let p = 2.0 * (a * b).sqrt() / sum;
        let e = (-s / b).exp();
        let delta = s * (a - b) / (a * b);
        let phi = expm1_ratio(delta);
        let dphi = expm1_ratio_deriv(delta);
        let sb = s / b;
        let bb = 1.0 + sb * phi;
        let k = p * e * bb;

        let dp_da = p * (0.5 / a - 1.0 / sum);
        let dp_db = p * (0.5 / b - 1.0 / sum);
        let de_db = e * s / (b * b);
        let db_da = sb * dphi * s / (a * a);
        let db_db = -(s / (b * b)) * phi - sb * dphi * s / (b * b);

        let dka = dp_da * e * bb + p * e * db_da;
        let dkb = dp_db * e * bb + p * de_db * bb + p * e * db_db;
        (k, dka, dkb)
    };
    if swapped {
        (k, dkb, dka)
    } else {
        (k, dka, dkb)
    }
}

/// Per-task spatial length-scales in meters. In ICM mode only the first
/// entry is read.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialParams {
    lengthscales: Vec<f64>,
}

impl SpatialParams {
    pub fn new(lengthscales: Vec<f64>) -> Result<Self, KernelError> {
        if lengthscales.is_empty() {
            return Err(KernelError::Dimension("no length-scales".into()));
        }
        for &l in &lengthscales {
            check_lengthscale(l)?;
        }
        Ok(Self { lengthscales })
    }

    pub fn shared(l: f64) -> Result<Self, KernelError> {
        Self::new(vec![l])
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn len(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengthscales.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.lengthscales.iter().copied().fold(0.0, f64::max)
    }

    /// Length-scale used for `task` under `mode`.
    pub fn for_task(&self, task: usize, mode: KernelMode) -> f64 {
        match mode {
            KernelMode::Icm => self.lengthscales[0],
            KernelMode::Convolved => self.lengthscales[task],
        }
    }

    fn check_mode(&self, n_tasks: usize, mode: KernelMode) -> Result<(), KernelError> {
        match mode {
            KernelMode::Icm => Ok(()),
            KernelMode::Convolved if self.lengthscales.len() == n_tasks => Ok(()),
            KernelMode::Convolved => Err(KernelError::Dimension(format!(
                "convolved mode needs {n_tasks} length-scales, got {}",
                self.lengthscales.len()
            ))),
        }
    }
}

/// Lower-triangular factor `L` of the task covariance, stored as the packed
/// row-major half-vectorization with log-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCholeskyFactor {
    n: usize,
    packed: Vec<f64>,
}

/// Offset of `L[i][j]` (j ≤ i) in the packed row-major layout.
#[inline]
pub fn packed_index(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl TaskCholeskyFactor {
    pub fn packed_len(n: usize) -> usize {
        n * (n + 1) / 2
    }

    /// From raw packed parameters (diagonal in log-space).
    pub fn from_packed(n: usize, packed: Vec<f64>) -> Result<Self, KernelError> {
        if packed.len() != Self::packed_len(n) {
            return Err(KernelError::Dimension(format!(
                "task factor for {n} tasks needs {} entries, got {}",
                Self::packed_len(n),
                packed.len()
            )));
        }
        Ok(Self { n, packed })
    }

    /// From a materialized lower-triangular matrix with positive diagonal.
    pub fn from_lower(lower: &DMatrix<f64>) -> Result<Self, KernelError> {
        let n = lower.nrows();
        if lower.ncols() != n || n == 0 {
            return Err(KernelError::Dimension("task factor must be square".into()));
        }
        let mut packed = Vec::with_capacity(Self::packed_len(n));
        for i in 0..n {
            for j in 0..=i {
                let v = lower[(i, j)];
                if i == j {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(KernelError::Dimension(format!(
                            "diagonal entry {i} must be positive, got {v}"
                        )));
                    }
                    packed.push(v.ln());
                } else {
                    packed.push(v);
                }
            }
        }
        Ok(Self { n, packed })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            packed: vec![0.0; Self::packed_len(n)],
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn lower(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..=i {
                let v = self.packed[packed_index(i, j)];
                l[(i, j)] = if i == j { v.exp() } else { v };
            }
        }
        l
    }

    /// `K_c = L Lᵀ`.
    pub fn task_cov(&self) -> TaskCovariance {
        let l = self.lower();
        let mut k = &l * l.transpose();
        symmetrize(&mut k);
        TaskCovariance(k)
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inter-task amplitude matrix `K_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCovariance(DMatrix<f64>);

impl TaskCovariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, KernelError> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(KernelError::Dimension("task covariance must be square".into()));
        }
        Ok(Self(matrix))
    }

    pub fn n_tasks(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-task observation noise variances (normalized units²).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    variances: Vec<f64>,
}

impl NoiseParams {
    /// Validates every variance against [`DEFAULT_NOISE_FLOOR`].
    pub fn new(variances: Vec<f64>) -> Result<Self, KernelError> {
        Self::with_floor(variances, DEFAULT_NOISE_FLOOR)
    }

    pub fn with_floor(variances: Vec<f64>, floor: f64) -> Result<Self, KernelError> {
        for &v in &variances {
            if !(v >= floor && v.is_finite()) {
                return Err(KernelError::NoiseBelowFloor { value: v, floor });
            }
        }
        Ok(Self { variances })
    }

    /// Raises every variance to at least `floor`.
    pub fn clamped(variances: Vec<f64>, floor: f64) -> Self {
        Self {
            variances: variances.into_iter().map(|v| v.max(floor)).collect(),
        }
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn get(&self, task: usize) -> f64 {
        self.variances[task]
    }
}

fn check_points(points: &[TaskPoint], n_tasks: usize) -> Result<(), KernelError> {
    for p in points {
        if p.task.0 >= n_tasks {
            return Err(KernelError::TaskOutOfRange {
                task: p.task.0,
                n_tasks,
            });
        }
    }
    Ok(())
}

/// Unit-amplitude spatial covariance between two points under `mode`.
#[inline]
pub(crate) fn spatial_unit(a: &TaskPoint, b: &TaskPoint, spatial: &SpatialParams, mode: KernelMode) -> f64 {
    let r = a.location.distance(&b.location);
    match mode {
        KernelMode::Icm => matern32_raw(r, spatial.lengthscales[0]),
        KernelMode::Convolved => {
            cross_matern32_raw(r, spatial.lengthscales[a.task.0], spatial.lengthscales[b.task.0])
        }
    }
}

/// Full training covariance `K + Σ_noise` over `points`.
pub fn assemble_training_cov(
    points: &[TaskPoint],
    task_cov: &TaskCovariance,
    spatial: &SpatialParams,
    noise: &NoiseParams,
    mode: KernelMode,
) -> Result<DMatrix<f64>, KernelError> {
    let n_tasks = task_cov.n_tasks();
    check_points(points, n_tasks)?;
    spatial.check_mode(n_tasks, mode)?;
    if noise.variances.len() != n_tasks {
        return Err(KernelError::Dimension(format!(
            "{} noise variances for {n_tasks} tasks",
            noise.variances.len()
        )));
    }
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for p in 0..m {
        let a = &points[p];
        for q in 0..p {
            let b = &points[q];
            let v = task_cov.get(a.task.0, b.task.0) * spatial_unit(a, b, spatial, mode);
            k[(p, q)] = v;
            k[(q, p)] = v;
        }
        k[(p, p)] = task_cov.get(a.task.0, a.task.0) + noise.get(a.task.0);
    }
    Ok(k)
}

/// Noise-free cross covariance block, `|queries| × |obs|`.
pub fn assemble_cross_cov(
    queries: &[TaskPoint],
    obs: &[TaskPoint],
    task_cov: &TaskCovariance,
    spatial: &SpatialParams,
    mode: KernelMode,
) -> Result<DMatrix<f64>, KernelError> {
    let n_tasks = task_cov.n_tasks();
    check_points(queries, n_tasks)?;
    check_points(obs, n_tasks)?;
    spatial.check_mode(n_tasks, mode)?;
    Ok(DMatrix::from_fn(queries.len(), obs.len(), |i, j| {
        let (a, b) = (&queries[i], &obs[j]);
        task_cov.get(a.task.0, b.task.0) * spatial_unit(a, b, spatial, mode)
    }))
}

/// Cholesky factor of `m + jitter·I`, walking [`JITTER_LADDER`]. Returns the
/// factor and the jitter that succeeded.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), KernelError> {
    for &jitter in &JITTER_LADDER {
        let mut a = m.clone();
        if jitter > 0.0 {
            for i in 0..a.nrows() {
                a[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok((chol, jitter));
        }
    }
    Err(KernelError::NotPositiveDefinite(JITTER_LADDER[JITTER_LADDER.len() - 1]))
}
