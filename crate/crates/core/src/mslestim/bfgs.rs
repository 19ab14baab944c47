//! BFGS minimizer with Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient's infinity norm is at most this.
    pub tol_grad: f64,
    /// Stop when a full step improves the objective by at most this,
    /// relative to `max(1, |f|)`.
    pub tol_rel: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 500,
            tol_grad: 1e-6,
            tol_rel: 1e-10,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    GradientNorm,
    RelativeImprovement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged(Criterion),
    MaxIterations,
    LineSearchFailure,
    NonFiniteObjective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`, which returns the value and gradient at a point. An error
/// from `f` aborts the run.
pub fn minimize<E>(
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
    x0: &[f64],
    opts: &BfgsOptions,
) -> Result<BfgsOutcome, E> {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice())?;
    let mut g = DVector::from_vec(g0);
    let mut evaluations = 1;
    let outcome = |x: &DVector<f64>, fx, g: &DVector<f64>, it, ev, t| BfgsOutcome {
        x: x.as_slice().to_vec(),
        f: fx,
        gradient: g.as_slice().to_vec(),
        iterations: it,
        evaluations: ev,
        termination: t,
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Ok(outcome(&x, fx, &g, 0, evaluations, Termination::NonFiniteObjective));
    }
    if inf_norm(&g) <= opts.tol_grad {
        return Ok(outcome(&x, fx, &g, 0, evaluations, Termination::Converged(Criterion::GradientNorm)));
    }
    let initial_h = |g: &DVector<f64>| DMatrix::<f64>::identity(n, n) / inf_norm(g).max(1e-12);
    let mut h = initial_h(&g);
    let mut fresh = true;

    for iter in 1..=opts.max_iter {
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = initial_h(&g);
            fresh = true;
            d = -(&h * &g);
            slope = g.dot(&d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &x + step * &d;
            let (ft, gt) = f(trial.as_slice())?;
            evaluations += 1;
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) && ft <= fx + opts.armijo_c * step * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            step *= opts.shrink;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                return Ok(outcome(&x, fx, &g, iter, evaluations, Termination::LineSearchFailure));
            }
            h = initial_h(&g);
            fresh = true;
            continue;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let improvement = fx - f_new;
        // A negligible gain counts when the quasi-Newton step was taken in
        // full, or when it came from the uninformed steepest-descent matrix.
        let trusted_step = step == 1.0 || fresh;
        x = x_new;
        g = g_new;
        let f_prev = fx;
        fx = f_new;

        if inf_norm(&g) <= opts.tol_grad {
            return Ok(outcome(&x, fx, &g, iter, evaluations, Termination::Converged(Criterion::GradientNorm)));
        }
        if trusted_step && improvement <= opts.tol_rel * f_prev.abs().max(1.0) {
            return Ok(outcome(&x, fx, &g, iter, evaluations, Termination::Converged(Criterion::RelativeImprovement)));
        }

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                // Rescale the initial matrix to the observed curvature.
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            h -= rho * (&hy * s.transpose() + &s * hy.transpose());
            h += (rho * rho * yhy + rho) * (&s * s.transpose());
            fresh = false;
        }
    }
    Ok(outcome(&x, fx, &g, opts.max_iter, evaluations, Termination::MaxIterations))
}
