//! Log marginal likelihood and its gradient in the packed parameter space.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{Dataset, TaskPoint};
use crate::kernels::{
    assemble_training_cov, cross_matern32_grad, jittered_cholesky, matern32_dl, spatial_unit, KernelMode,
    NoiseParams,
};

use super::hyper::HyperParams;
use super::GpError;

/// Factorized training covariance at a fixed θ.
pub(crate) struct Evaluation {
    pub lml: f64,
    pub chol: Cholesky<f64, Dyn>,
    pub alpha: DVector<f64>,
    pub jitter: f64,
}

fn check_theta(theta: &HyperParams, data: &Dataset) -> Result<(), GpError> {
    if theta.n_tasks() != data.n_tasks() {
        return Err(GpError::TaskCountMismatch {
            theta: theta.n_tasks(),
            data: data.n_tasks(),
        });
    }
    Ok(())
}

/// Relative diagonal shift under which the noise-free covariance must still
/// factorize for a convolved-mode θ to be accepted.
const SIGNAL_PSD_RTOL: f64 = 1e-8;

/// The convolved cross kernel is not positive semi-definite in two
/// dimensions for every length-scale combination. Where the noise-free
/// covariance is indefinite, the noise term can mask it and the likelihood
/// rewards the invalid model, so such θ are rejected outright.
fn signal_is_psd(k: &DMatrix<f64>, points: &[TaskPoint], noise: &NoiseParams) -> bool {
    let mut signal = k.clone();
    for (i, p) in points.iter().enumerate() {
        signal[(i, i)] -= noise.get(p.task.0);
    }
    let shift = SIGNAL_PSD_RTOL * signal.diagonal().max().max(f64::MIN_POSITIVE);
    for i in 0..signal.nrows() {
        signal[(i, i)] += shift;
    }
    Cholesky::new(signal).is_some()
}

pub(crate) fn evaluate(theta: &HyperParams, points: &[TaskPoint], y: &DVector<f64>) -> Result<Evaluation, GpError> {
    let (factor, spatial, noise) = theta.unpack();
    let k = assemble_training_cov(points, &factor.task_cov(), &spatial, &noise, theta.mode())?;
    if theta.mode() == KernelMode::Convolved && !signal_is_psd(&k, points, &noise) {
        return Err(GpError::Rejected);
    }
    let (chol, jitter) = jittered_cholesky(&k).map_err(|_| GpError::Rejected)?;
    let alpha = chol.solve(y);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let m = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * m * (2.0 * PI).ln();
    if !lml.is_finite() {
        return Err(GpError::Rejected);
    }
    Ok(Evaluation {
        lml,
        chol,
        alpha,
        jitter,
    })
}

/// `log p(y | X, θ)` for the values stored in `data` (taken as-is; callers
/// normalize beforehand). Returns [`GpError::Rejected`] when the covariance
/// cannot be factorized within the jitter ladder, or, in convolved mode, when
/// the noise-free covariance is indefinite.
pub fn log_marginal_likelihood(theta: &HyperParams, data: &Dataset) -> Result<f64, GpError> {
    check_theta(theta, data)?;
    let y = DVector::from_vec(data.values());
    Ok(evaluate(theta, &data.points(), &y)?.lml)
}

/// Gradient of [`log_marginal_likelihood`] with respect to the packed θ.
pub fn lml_gradient(theta: &HyperParams, data: &Dataset) -> Result<Vec<f64>, GpError> {
    check_theta(theta, data)?;
    let y = DVector::from_vec(data.values());
    let points = data.points();
    let eval = evaluate(theta, &points, &y)?;
    Ok(analytic_gradient(theta, &points, &eval))
}

/// Central-difference gradient of the log marginal likelihood, step `h` per
/// packed coordinate.
pub fn lml_gradient_fd(theta: &HyperParams, data: &Dataset, h: f64) -> Result<Vec<f64>, GpError> {
    check_theta(theta, data)?;
    let y = DVector::from_vec(data.values());
    let points = data.points();
    fd_gradient(theta, &points, &y, h)
}

pub(crate) fn fd_gradient(
    theta: &HyperParams,
    points: &[TaskPoint],
    y: &DVector<f64>,
    h: f64,
) -> Result<Vec<f64>, GpError> {
    let layout = theta.layout();
    let base = theta.values();
    (0..base.len())
        .map(|i| {
            let mut plus = base.to_vec();
            let mut minus = base.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fp = evaluate(&HyperParams::from_values(layout, plus)?, points, y)?.lml;
            let fm = evaluate(&HyperParams::from_values(layout, minus)?, points, y)?.lml;
            Ok((fp - fm) / (2.0 * h))
        })
        .collect()
}

/// `K⁻¹ = L⁻ᵀ L⁻¹`, inverting the triangular factor column by column and
/// skipping its known zeros.
fn spd_inverse(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let l = chol.l_dirty();
    let m = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        let x = &mut inv.as_mut_slice()[j * m..(j + 1) * m];
        x[j] = 1.0;
        for k in j..m {
            let lk = &l.as_slice()[k * m..(k + 1) * m];
            x[k] /= lk[k];
            let xk = x[k];
            for i in (k + 1)..m {
                x[i] -= lk[i] * xk;
            }
        }
    }
    inv.tr_mul(&inv)
}

/// `∂LML/∂θ_k = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ_k)`, accumulated entrywise.
pub(crate) fn analytic_gradient(theta: &HyperParams, points: &[TaskPoint], eval: &Evaluation) -> Vec<f64> {
    let layout = theta.layout();
    let n = layout.n_tasks;
    let mode = layout.mode;
    let (factor, spatial, _) = theta.unpack();
    let lower = factor.lower();
    let kc = factor.task_cov();
    let ls = spatial.lengthscales();
    let noise_raw = &theta.values()[layout.noise_range()];

    let mut w = spd_inverse(&eval.chol);
    w.neg_mut();
    w.ger(1.0, &eval.alpha, &eval.alpha, 1.0);

    // s = G + Gᵀ where G[i,j] = ∂LML/∂K_c[i,j].
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut g_ls = vec![0.0; layout.n_lengthscales()];
    let mut g_noise = vec![0.0; n];

    let m = points.len();
    for p in 0..m {
        let a = &points[p];
        let i = a.task.0;
        let wpp = w[(p, p)];
        s[(i, i)] += wpp;
        g_noise[i] += 0.5 * wpp * noise_raw[i].exp();
        for q in 0..p {
            let b = &points[q];
            let j = b.task.0;
            let wpq = w[(p, q)];
            let r = a.location.distance(&b.location);
            let amp = kc.get(i, j);
            match mode {
                KernelMode::Icm => {
                    let l = ls[0];
                    let unit = spatial_unit(a, b, &spatial, mode);
                    s[(i, j)] += wpq * unit;
                    s[(j, i)] += wpq * unit;
                    g_ls[0] += wpq * amp * matern32_dl(r, l) * l;
                }
                KernelMode::Convolved => {
                    let (unit, dli, dlj) = cross_matern32_grad(r, ls[i], ls[j]);
                    s[(i, j)] += wpq * unit;
                    s[(j, i)] += wpq * unit;
                    g_ls[i] += wpq * amp * dli * ls[i];
                    g_ls[j] += wpq * amp * dlj * ls[j];
                }
            }
        }
    }

    let d_lower = &s * &lower;
    let mut grad = Vec::with_capacity(layout.dim());
    for i in 0..n {
        for j in 0..=i {
            let g = d_lower[(i, j)];
            grad.push(if i == j { g * lower[(i, i)] } else { g });
        }
    }
    grad.extend(g_ls);
    grad.extend(g_noise);
    grad
}
