//! Damped Gauss–Newton (Levenberg–Marquardt) for small dense problems.

use nalgebra::{DMatrix, DVector};

pub(crate) const MAX_ITERATIONS: usize = 200;
pub(crate) const STEP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub(crate) struct LmSolution {
    pub params: Vec<f64>,
    /// `s² (JᵀJ)⁻¹`, `None` when the normal matrix is singular.
    pub covariance: Option<DMatrix<f64>>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn residuals(model: &dyn Fn(&[f64], f64) -> f64, p: &[f64], x: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(y).map(|(&xi, &yi)| model(p, xi) - yi))
}

fn jacobian(model: &dyn Fn(&[f64], f64) -> f64, p: &[f64], x: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(x.len(), p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let up: Vec<f64> = x.iter().map(|&xi| model(&q, xi)).collect();
        q[k] = p[k] - h;
        let down: Vec<f64> = x.iter().map(|&xi| model(&q, xi)).collect();
        q[k] = p[k];
        for i in 0..x.len() {
            jac[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

/// Normal-matrix inverse with a relative conditioning guard on the
/// column-scaled problem.
fn guarded_inverse(jtj: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = jtj.nrows();
    let d: Vec<f64> = (0..n).map(|i| jtj[(i, i)].sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let eig = scaled.clone().symmetric_eigen();
    let (min, max) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if !(min > 1e-13 * max) {
        return None;
    }
    let inv = scaled.try_inverse()?;
    Some(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j])))
}

pub(crate) fn solve(model: &dyn Fn(&[f64], f64) -> f64, p0: &[f64], x: &[f64], y: &[f64]) -> LmSolution {
    let mut p = p0.to_vec();
    let mut r = residuals(model, &p, x, y);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian(model, &p, x);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..p.len() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let tr = residuals(model, &trial, x, y);
            let tc = tr.norm_squared();
            if tc.is_finite() && tc <= cost {
                let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small = step.norm() < STEP_TOL * (pnorm + STEP_TOL);
                p = trial;
                r = tr;
                cost = tc;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let jac = jacobian(model, &p, x);
    let dof = x.len().saturating_sub(p.len()).max(1) as f64;
    let s2 = cost / dof;
    let covariance = guarded_inverse(&(jac.transpose() * &jac)).map(|inv| inv * s2);
    LmSolution { params: p, covariance, residual_norm: cost.sqrt(), iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_line_and_exponential() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&t| 2.0 * (-t / 0.7).exp() + 0.1).collect();
        let m = |p: &[f64], t: f64| p[0] * (-t / p[1]).exp() + p[2];
        let s = solve(&m, &[1.0, 0.3, 0.0], &x, &y);
        assert!(s.converged);
        assert!((s.params[1] - 0.7).abs() < 1e-7);
        assert!(s.covariance.is_some());
    }

    #[test]
    fn unidentifiable_parameter_has_no_covariance() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = vec![0.5; 10];
        let m = |p: &[f64], t: f64| p[0] * (-t / p[1]).exp() + p[2];
        let s = solve(&m, &[0.0, 3.0, 0.5], &x, &y);
        assert!(s.covariance.is_none());
    }
}
