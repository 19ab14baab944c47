//! Finite-difference Hessians and the covariance of the estimates.

use nalgebra::DMatrix;

use super::EstimError;
use crate::simlik::LikelihoodProblem;

/// Relative step used by both Hessian routes.
pub const HESSIAN_STEP: f64 = 1e-4;

fn step(x: f64) -> f64 {
    HESSIAN_STEP * x.abs().max(1.0)
}

fn check_finite(h: &DMatrix<f64>) -> Result<(), EstimError> {
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            if !h[(i, j)].is_finite() {
                return Err(EstimError::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Largest `|H - H'|` entry.
pub fn symmetry_defect(h: &DMatrix<f64>) -> f64 {
    (h - h.transpose()).amax()
}

pub fn symmetrize(h: &DMatrix<f64>) -> DMatrix<f64> {
    (h + h.transpose()) * 0.5
}

/// Central-difference Hessian of a scalar function from function values only.
pub fn hessian_from_values<E>(
    mut f: impl FnMut(&[f64]) -> Result<f64, E>,
    x: &[f64],
) -> Result<DMatrix<f64>, E> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|&v| step(v)).collect();
    let f0 = f(x)?;
    let mut out = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h[i];
        let fp = f(&p)?;
        p[i] = x[i] - h[i];
        let fm = f(&p)?;
        p[i] = x[i];
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let v = f(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * h[i] * h[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Jacobian of a gradient by central differences, unsymmetrized. Column `i`
/// holds the change of the gradient along coordinate `i`.
pub fn jacobian_of_gradient<E>(
    mut g: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    x: &[f64],
) -> Result<DMatrix<f64>, E> {
    let n = x.len();
    let mut out = DMatrix::zeros(n, n);
    let mut p = x.to_vec();
    for i in 0..n {
        let h = step(x[i]);
        p[i] = x[i] + h;
        let gp = g(&p)?;
        p[i] = x[i] - h;
        let gm = g(&p)?;
        p[i] = x[i];
        for k in 0..n {
            out[(k, i)] = (gp[k] - gm[k]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Central-difference Hessian of the simulated log-likelihood from function
/// values, symmetrized. Costs `2P^2 + 1` evaluations.
pub fn numerical_hessian(problem: &LikelihoodProblem<'_>, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
    let h = hessian_from_values(|t| problem.loglik(t), theta)?;
    let h = symmetrize(&h);
    check_finite(&h)?;
    Ok(h)
}

/// Hessian by differencing the analytic gradient, symmetrized. Costs `2P`
/// gradient evaluations.
pub fn gradient_hessian(problem: &LikelihoodProblem<'_>, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
    let j = jacobian_of_gradient(
        |t| problem.evaluate(t, true).map(|r| r.gradient.expect("gradient requested")),
        theta,
    )?;
    let h = symmetrize(&j);
    check_finite(&h)?;
    Ok(h)
}

/// Inverse of `-H`; fails unless `H` is negative definite.
pub fn covariance(hessian: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimError> {
    check_finite(hessian)?;
    let neg = -symmetrize(hessian);
    let chol = neg.cholesky().ok_or(EstimError::NotNegativeDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> Result<f64, ()> {
        // 0.5 x'Ax + b'x with A = [[3, 1, 0], [1, 2, -0.5], [0, -0.5, 4]]
        let a = [[3.0, 1.0, 0.0], [1.0, 2.0, -0.5], [0.0, -0.5, 4.0]];
        let b = [1.0, -2.0, 0.5];
        let mut v = 0.0;
        for i in 0..3 {
            v += b[i] * x[i];
            for j in 0..3 {
                v += 0.5 * a[i][j] * x[i] * x[j];
            }
        }
        Ok(v)
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        let h = hessian_from_values(quadratic, &[0.3, -1.5, 2.0]).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 2.0, -0.5, 0.0, -0.5, 4.0]);
        assert!((h - a).amax() < 1e-6);
    }

    #[test]
    fn gradient_jacobian_of_quadratic() {
        let g = |x: &[f64]| -> Result<Vec<f64>, ()> {
            Ok(vec![3.0 * x[0] + x[1] + 1.0, x[0] + 2.0 * x[1] - 0.5 * x[2] - 2.0, -0.5 * x[1] + 4.0 * x[2] + 0.5])
        };
        let j = jacobian_of_gradient(g, &[1.0, 2.0, 3.0]).unwrap();
        assert!(symmetry_defect(&j) < 1e-9);
        assert!((j[(0, 1)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn covariance_of_minus_identity() {
        let cov = covariance(&-DMatrix::<f64>::identity(4, 4)).unwrap();
        assert!((cov - DMatrix::identity(4, 4)).amax() < 1e-15);
    }

    #[test]
    fn covariance_two_by_two_closed_form() {
        // -H = [[a, b], [b, d]] -> inverse = [[d, -b], [-b, a]] / (ad - b^2)
        let (a, b, d) = (4.0, 1.5, 2.0);
        let h = DMatrix::from_row_slice(2, 2, &[-a, -b, -b, -d]);
        let cov = covariance(&h).unwrap();
        let det = a * d - b * b;
        let expect = DMatrix::from_row_slice(2, 2, &[d / det, -b / det, -b / det, a / det]);
        assert!((cov - expect).amax() < 1e-14);
    }

    #[test]
    fn indefinite_and_non_finite_hessians_are_rejected() {
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(covariance(&h), Err(EstimError::NotNegativeDefinite)));
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, f64::NAN, f64::NAN, -1.0]);
        assert!(matches!(covariance(&h), Err(EstimError::NonFiniteEntry { row: 1, col: 0 })));
    }
}
