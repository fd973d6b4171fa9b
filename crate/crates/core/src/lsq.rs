//! Levenberg-Marquardt minimization of `0.5 * |r(p)|^2` with a
//! central-difference Jacobian and Marquardt diagonal scaling.
//!
//! Only steps that strictly lower the cost are accepted, so the recorded
//! cost history is monotone non-increasing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquaresProblem {
    fn n_residuals(&self) -> usize;

    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Rejects parameter vectors outside the model's domain.
    fn feasible(&self, _p: &[f64]) -> bool {
        true
    }

    /// Typical magnitude of parameter `j`, used for difference steps.
    fn scale(&self, _j: usize) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost reduction below which the fit has converged.
    pub ftol: f64,
    /// Relative step size below which the fit has converged.
    pub xtol: f64,
    pub gtol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-14,
            xtol: 1e-13,
            gtol: 1e-30,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub jacobian: DMatrix<f64>,
    pub n_residuals: usize,
}

impl LmOutcome {
    /// Parameter covariance scaled by the reduced chi-square.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.params.len();
        let dof = self.n_residuals.saturating_sub(n).max(1) as f64;
        let jtj = self.jacobian.transpose() * &self.jacobian;
        let inv = jtj
            .clone()
            .try_inverse()
            .or_else(|| jtj.pseudo_inverse(1e-14).ok())
            .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
        inv * (2.0 * self.cost / dof)
    }

    pub fn stderr(&self) -> Vec<f64> {
        let c = self.covariance();
        (0..self.params.len()).map(|i| c[(i, i)].max(0.0).sqrt()).collect()
    }
}

fn cost_of<P: LeastSquaresProblem>(prob: &P, p: &[f64], buf: &mut [f64]) -> f64 {
    prob.residuals(p, buf);
    0.5 * buf.iter().map(|r| r * r).sum::<f64>()
}

pub fn jacobian<P: LeastSquaresProblem>(prob: &P, p: &[f64]) -> DMatrix<f64> {
    let m = prob.n_residuals();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let (mut fp, mut fm) = (vec![0.0; m], vec![0.0; m]);
    let mut q = p.to_vec();
    for j in 0..n {
        let h = 1e-6 * p[j].abs().max(prob.scale(j));
        q[j] = p[j] + h;
        let up = prob.feasible(&q);
        q[j] = p[j] - h;
        let down = prob.feasible(&q);
        let (lo, hi) = match (down, up) {
            (true, true) => (p[j] - h, p[j] + h),
            (false, true) => (p[j], p[j] + h),
            (true, false) => (p[j] - h, p[j]),
            (false, false) => (p[j], p[j]),
        };
        if hi > lo {
            q[j] = hi;
            prob.residuals(&q, &mut fp);
            q[j] = lo;
            prob.residuals(&q, &mut fm);
            for i in 0..m {
                jac[(i, j)] = (fp[i] - fm[i]) / (hi - lo);
            }
        }
        q[j] = p[j];
    }
    jac
}

/// Fails when the column-normalized Jacobian is numerically rank deficient.
pub fn check_rank(jac: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut scaled = jac.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            let name = names.get(j).map(String::as_str).unwrap_or("?");
            return Err(Error::DegenerateJacobian(format!(
                "residuals do not depend on `{name}`"
            )));
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    let (min, max) = (sv.min(), sv.max());
    if min < 1e-7 * max {
        return Err(Error::DegenerateJacobian(format!(
            "parameters are not independently identifiable (condition {:.1e})",
            max / min.max(f64::MIN_POSITIVE)
        )));
    }
    Ok(())
}

pub fn minimize<P: LeastSquaresProblem>(prob: &P, p0: &[f64], opts: &LmOptions) -> Result<LmOutcome> {
    let m = prob.n_residuals();
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut buf = vec![0.0; m];
    let mut cost = cost_of(prob, &p, &mut buf);
    if !cost.is_finite() {
        return Err(Error::DegenerateJacobian("non-finite residuals at the initial guess".into()));
    }
    let mut r = DVector::from_column_slice(&buf);
    let mut jac = jacobian(prob, &p);
    let mut history = vec![cost];
    let mut mu = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let grad = jac.transpose() * &r;
        if cost == 0.0 || grad.amax() <= opts.gtol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let dmax = jtj.diagonal().max();
        let mut accepted = None;
        while mu < 1e20 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-12 * dmax);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if !prob.feasible(&trial) {
                mu *= 10.0;
                continue;
            }
            let trial_cost = cost_of(prob, &trial, &mut buf);
            if trial_cost.is_finite() && trial_cost < cost {
                accepted = Some((trial, trial_cost, step));
                mu = (mu / 10.0).max(1e-15);
                break;
            }
            mu *= 10.0;
        }
        let Some((trial, trial_cost, step)) = accepted else {
            // no descent direction left at machine precision
            converged = true;
            break;
        };
        let reduction = (cost - trial_cost) / cost;
        let pnorm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        p = trial;
        cost = trial_cost;
        history.push(cost);
        r = DVector::from_column_slice(&buf);
        jac = jacobian(prob, &p);
        if reduction <= opts.ftol || step.norm() <= opts.xtol * (pnorm + opts.xtol) {
            converged = true;
            break;
        }
    }

    Ok(LmOutcome {
        params: p,
        cost,
        cost_history: history,
        iterations,
        converged,
        jacobian: jac,
        n_residuals: m,
    })
}
