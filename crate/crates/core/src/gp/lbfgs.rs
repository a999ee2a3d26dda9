//! Limited-memory BFGS minimizer with a strong-Wolfe line search.
//!
//! Objective evaluations may be rejected (`None`); the line search treats a
//! rejection like an insufficient decrease and shrinks the step.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LbfgsSettings {
    pub max_iters: usize,
    /// Stop when an accepted step changes the objective by at most `f_tol`
    /// while the gradient norm is at most `conv_grad_tol`, or as soon as the
    /// gradient norm drops below `grad_tol`.
    pub f_tol: f64,
    pub conv_grad_tol: f64,
    pub grad_tol: f64,
    pub memory: usize,
    /// Cap on the infinity norm of a trial step.
    pub max_step: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self {
            max_iters: 200,
            f_tol: 1e-6,
            conv_grad_tol: 1e-3,
            grad_tol: 1e-8,
            memory: 8,
            max_step: 50.0,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: returns `-H g`.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

struct Trial {
    step: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_TRIALS: usize = 30;

/// Strong-Wolfe line search along `d` (bracketing then zoom). Rejected
/// trial points shrink the bracket as if the objective were too large
/// there. Falls back to the best Armijo point when the curvature condition
/// cannot be met within the trial budget.
fn line_search<F>(objective: &F, x: &[f64], f0: f64, slope0: f64, d: &[f64], step0: f64, step_max: f64) -> Option<Trial>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let eval = |step: f64| -> Option<Trial> {
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + step * di).collect();
        let (f, g) = objective(&xt)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let slope = dot(&g, d);
        Some(Trial { step, x: xt, f, g, slope })
    };
    let armijo = |t: &Trial| t.f <= f0 + C1 * t.step * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -C2 * slope0;

    // Bracketing phase: `lo` is the last acceptable point (None = the origin).
    let mut lo: Option<Trial> = None;
    let mut hi_step: Option<f64> = None;
    let mut step = step0.min(step_max);
    let mut trials = 0;
    while trials < MAX_TRIALS {
        trials += 1;
        let lo_f = lo.as_ref().map_or(f0, |t| t.f);
        match eval(step) {
            None => {
                hi_step = Some(step);
                break;
            }
            Some(t) if !armijo(&t) || (lo.is_some() && t.f >= lo_f) => {
                hi_step = Some(t.step);
                break;
            }
            Some(t) if curvature(&t) => return Some(t),
            Some(t) if t.slope >= 0.0 => {
                // Overshot a minimizer: the bracket is [t, lo].
                let other = lo.as_ref().map_or(0.0, |l| l.step);
                hi_step = Some(other);
                lo = Some(t);
                break;
            }
            Some(t) => {
                let at_max = t.step >= step_max;
                lo = Some(t);
                if at_max {
                    return lo;
                }
                step = (2.0 * step).min(step_max);
            }
        }
    }
    let Some(mut hi) = hi_step else {
        return lo;
    };

    // Zoom phase: bisect between lo (acceptable) and hi.
    while trials < MAX_TRIALS {
        trials += 1;
        let lo_step = lo.as_ref().map_or(0.0, |t| t.step);
        let lo_f = lo.as_ref().map_or(f0, |t| t.f);
        let step = 0.5 * (lo_step + hi);
        if (hi - lo_step).abs() <= 1e-12 * step.abs().max(1e-12) {
            break;
        }
        match eval(step) {
            None => hi = step,
            Some(t) if !armijo(&t) || t.f >= lo_f => hi = t.step,
            Some(t) => {
                if curvature(&t) {
                    return Some(t);
                }
                if t.slope * (hi - lo_step) >= 0.0 {
                    hi = lo_step;
                }
                lo = Some(t);
            }
        }
    }
    lo
}

/// Minimizes `objective`, which returns `(f, ∇f)` or `None` for a rejected
/// point. `x0` must be accepted.
pub(crate) fn minimize<F>(objective: F, x0: Vec<f64>, settings: LbfgsSettings) -> Option<LbfgsResult>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let (mut f, mut g) = objective(&x0)?;
    let mut x = x0;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut iterations = 0;
    let mut converged = norm(&g) <= settings.grad_tol;

    while !converged && iterations < settings.max_iters {
        iterations += 1;
        let mut d = direction(&g, &history);
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let d_inf = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let step_max = settings.max_step / d_inf.max(1e-300);
        let step0 = if history.is_empty() { (1.0 / d_inf.max(1e-12)).min(1.0) } else { 1.0 };

        let Some(t) = line_search(&objective, &x, f, slope, &d, step0, step_max) else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let df = (f - t.f).abs();
        x = t.x;
        f = t.f;
        g = t.g;
        let gn = norm(&g);
        converged = (df <= settings.f_tol && gn <= settings.conv_grad_tol) || gn <= settings.grad_tol;
    }

    Some(LbfgsResult {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
        converged,
    })
}
