//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use soilmap::data::{Dataset, Location, Observation, TaskId, TaskPoint};
use soilmap::gp::{sample_prior, HyperParams};
use soilmap::kernels::{KernelMode, NoiseParams, SpatialParams, TaskCholeskyFactor, DEFAULT_NOISE_FLOOR};

pub const FIELD_W: f64 = 300.0;
pub const FIELD_H: f64 = 170.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Ranges for random hyperparameter draws.
#[derive(Clone, Copy)]
pub struct ThetaRanges {
    pub lengthscale: (f64, f64),
    pub off_diag: (f64, f64),
    pub diag: (f64, f64),
    pub noise: (f64, f64),
}

/// l ∈ [1, 200] log-uniform, L off-diagonals ∈ [−2, 2], diagonal ∈ [0.1, 3],
/// σ² ∈ [1e-6, 1] log-uniform.
pub const STRESS: ThetaRanges = ThetaRanges {
    lengthscale: (1.0, 200.0),
    off_diag: (-2.0, 2.0),
    diag: (0.1, 3.0),
    noise: (1e-6, 1.0),
};

/// Better-conditioned draws for oracle comparisons.
pub const MODERATE: ThetaRanges = ThetaRanges {
    lengthscale: (5.0, 60.0),
    off_diag: (-1.0, 1.0),
    diag: (0.3, 1.5),
    noise: (1e-2, 0.5),
};

pub fn random_lower(rng: &mut ChaCha8Rng, n: usize, r: ThetaRanges) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => rng.random_range(r.off_diag.0..r.off_diag.1),
        std::cmp::Ordering::Equal => rng.random_range(r.diag.0..r.diag.1),
        std::cmp::Ordering::Less => 0.0,
    })
}

pub fn random_theta(rng: &mut ChaCha8Rng, n: usize, mode: KernelMode, r: ThetaRanges) -> HyperParams {
    let lower = random_lower(rng, n, r);
    let n_ls = match mode {
        KernelMode::Icm => 1,
        KernelMode::Convolved => n,
    };
    let ls: Vec<f64> = (0..n_ls).map(|_| log_uniform(rng, r.lengthscale.0, r.lengthscale.1)).collect();
    let noise: Vec<f64> = (0..n).map(|_| log_uniform(rng, r.noise.0, r.noise.1)).collect();
    theta_from_parts(&lower, &ls, &noise, mode)
}

pub fn theta_from_parts(lower: &DMatrix<f64>, ls: &[f64], noise: &[f64], mode: KernelMode) -> HyperParams {
    theta_with_floor(lower, ls, noise, mode, DEFAULT_NOISE_FLOOR)
}

pub fn theta_with_floor(lower: &DMatrix<f64>, ls: &[f64], noise: &[f64], mode: KernelMode, floor: f64) -> HyperParams {
    HyperParams::pack(
        &TaskCholeskyFactor::from_lower(lower).unwrap(),
        &SpatialParams::new(ls.to_vec()).unwrap(),
        &NoiseParams::clamped(noise.to_vec(), floor),
        mode,
        floor,
    )
    .unwrap()
}

/// `m` random (task, location) pairs in a `w × h` field; every task appears
/// at least once and locations are not shared across tasks.
pub fn heterotopic_points(rng: &mut ChaCha8Rng, n_tasks: usize, m: usize, w: f64, h: f64) -> Vec<TaskPoint> {
    assert!(m >= n_tasks);
    (0..m)
        .map(|p| {
            let task = if p < n_tasks { p } else { rng.random_range(0..n_tasks) };
            TaskPoint::new(
                TaskId(task),
                Location::new(rng.random_range(0.0..w), rng.random_range(0.0..h)),
            )
        })
        .collect()
}

pub fn dataset_from(points: &[TaskPoint], values: &[f64], n_tasks: usize) -> Dataset {
    let obs = points
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (p, &v))| Observation::new(format!("S{i:03}"), p.location, p.task, v))
        .collect();
    Dataset::new(obs, n_tasks).unwrap()
}

// ---------------------------------------------------------------------------
// Oracles written from the textbook formulas, independent of the library.

pub fn oracle_matern(r: f64, l: f64) -> f64 {
    let s = 3f64.sqrt() * r / l;
    (1.0 + s) * (-s).exp()
}

/// `2√(l_i l_j)/(l_i² − l_j²) · (l_i e^{−√3r/l_i} − l_j e^{−√3r/l_j})`.
pub fn oracle_cross(r: f64, li: f64, lj: f64) -> f64 {
    if (li - lj).abs() / li.max(lj) < 1e-6 {
        return oracle_matern(r, (li * lj).sqrt());
    }
    let s = 3f64.sqrt() * r;
    2.0 * (li * lj).sqrt() / (li * li - lj * lj) * (li * (-s / li).exp() - lj * (-s / lj).exp())
}

pub fn distance(a: Location, b: Location) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Dense `K + Σ` from its entry rule.
pub fn oracle_cov(points: &[TaskPoint], kc: &DMatrix<f64>, ls: &[f64], noise: &[f64], mode: KernelMode) -> DMatrix<f64> {
    let m = points.len();
    DMatrix::from_fn(m, m, |p, q| {
        let (a, b) = (points[p], points[q]);
        let (i, j) = (a.task.0, b.task.0);
        let r = distance(a.location, b.location);
        let unit = match mode {
            KernelMode::Icm => oracle_matern(r, ls[0]),
            KernelMode::Convolved => oracle_cross(r, ls[i], ls[j]),
        };
        kc[(i, j)] * unit + if p == q { noise[i] } else { 0.0 }
    })
}

/// Multivariate normal log-density via LU (no Cholesky).
pub fn dense_mvn_logpdf(k: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let lu = k.clone().lu();
    let det = lu.determinant();
    assert!(det > 0.0, "oracle covariance not positive definite");
    let alpha = lu.solve(y).unwrap();
    -0.5 * y.dot(&alpha) - 0.5 * det.ln() - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

// ---------------------------------------------------------------------------
// The synthetic field used by the recovery experiments.

/// Cell-centered 6 × 5 layout over the 300 × 170 m field.
pub fn grid30() -> Vec<Location> {
    (0..5)
        .flat_map(|r| (0..6).map(move |c| (r, c)))
        .map(|(r, c)| Location::new((c as f64 + 0.5) * 50.0, (r as f64 + 0.5) * 34.0))
        .collect()
}

/// Four tasks, unit variances, `r_12 = 0.9`, other pairs uncorrelated,
/// length-scales (40, 40, 60, 80) m.
pub fn field_prior(noise: f64) -> HyperParams {
    let mut kc = DMatrix::identity(4, 4);
    kc[(0, 1)] = 0.9;
    kc[(1, 0)] = 0.9;
    let lower = kc.cholesky().unwrap().l();
    theta_from_parts(&lower, &[40.0, 40.0, 60.0, 80.0], &[noise; 4], KernelMode::Convolved)
}

/// Homotopic draw with observation noise `noise` at `locations`.
pub fn noisy_field(locations: &[Location], noise: f64, seed: u64) -> Dataset {
    sample_prior(&field_prior(noise), locations, seed).unwrap()
}

/// One latent (noise-free) draw over `samples ∪ extra`, split into the two
/// sets; `noise` is then added to the sample part only.
pub fn latent_with_truth(samples: &[Location], extra: &[Location], noise: f64, seed: u64) -> (Dataset, Dataset) {
    let all: Vec<Location> = samples.iter().chain(extra).copied().collect();
    let draw = sample_prior(&field_prior(0.0), &all, seed).unwrap();
    let n = 4;
    let split = samples.len() * n;
    let mut rng = rng(seed ^ 0xA5A5_5A5A);
    let eps = Normal::new(0.0, noise.sqrt()).unwrap();
    let obs = draw.observations();
    let noisy: Vec<Observation> = obs[..split]
        .iter()
        .map(|o| Observation::new(o.sample_id.clone(), o.location, o.task, o.value + eps.sample(&mut rng)))
        .collect();
    let truth: Vec<Observation> = obs[split..].to_vec();
    (Dataset::new(noisy, n).unwrap(), Dataset::new(truth, n).unwrap())
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
