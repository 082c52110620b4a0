//! Damped Gauss-Newton (Levenberg-Marquardt) with central finite-difference
//! Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Relative step of the central differences.
    pub fd_relative_step: f64,
    /// Converged when `‖δ‖ / ‖x‖` falls below this.
    pub step_tolerance: f64,
    /// Converged when `‖Jᵀr‖∞` falls below this.
    pub gradient_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_lambda: 1e-3,
            fd_relative_step: 1e-4,
            step_tolerance: 1e-9,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `sqrt(diag(s² (JᵀJ)⁻¹))` with `s² = RSS / (m − n)`.
    pub std_errors: Vec<f64>,
    /// `‖r‖₂` at the solution.
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Ratio of largest to smallest eigenvalue of `JᵀJ`.
    pub condition: f64,
}

fn fd_step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1e-3)
}

fn jacobian<F>(f: &F, x: &[f64], m: usize, rel: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut j = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for c in 0..n {
        let h = fd_step(x[c], rel);
        xp[c] = x[c] + h;
        let up = f(&xp)?;
        xp[c] = x[c] - h;
        let down = f(&xp)?;
        xp[c] = x[c];
        for r in 0..m {
            j[(r, c)] = (up[r] - down[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes `½‖r(x)‖²`. A residual evaluation that fails at a trial point
/// counts as a rejected step.
pub fn levenberg_marquardt<F>(residuals: F, x0: &[f64], cfg: &LmConfig) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial guess must be non-empty and finite"));
    }
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = residuals(&x)?;
    let m = r.len();
    if m < n {
        return Err(invalid(format!("{m} residuals cannot determine {n} parameters")));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(invalid("residuals are not finite at the initial guess"));
    }
    let mut cost = sum_sq(&r);
    let mut lambda = cfg.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(&residuals, &x, m, cfg.fd_relative_step)?;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rv;
        if grad.amax() < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * jtj.diagonal().max().max(1e-300);

        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(diag_floor);
            }
            let Some(step) = a.clone().cholesky().map(|ch| ch.solve(&(-&grad))).or_else(|| a.lu().solve(&(-&grad)))
            else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            match residuals(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) && sum_sq(&rt) <= cost => {
                    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let rel_step = step.norm() / (x_norm + 1e-300);
                    x = trial;
                    cost = sum_sq(&rt);
                    r = rt;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if rel_step < cfg.step_tolerance {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // no downhill step at any damping: we sit at a minimum to machine precision
            converged = true;
            break;
        }
        jac = jacobian(&residuals, &x, m, cfg.fd_relative_step)?;
        if converged {
            break;
        }
    }

    let rv = DVector::from_column_slice(&r);
    let jtj = jac.transpose() * &jac;
    let gradient_norm = (jac.transpose() * &rv).amax();
    let dof = m.saturating_sub(n);
    let s2 = if dof > 0 { cost / dof as f64 } else { 0.0 };
    let eig = jtj.clone().symmetric_eigen();
    let (emax, emin) = (eig.eigenvalues.max(), eig.eigenvalues.min());
    let condition = if emin > 0.0 { emax / emin } else { f64::INFINITY };
    let std_errors = match jtj.clone().try_inverse() {
        Some(inv) if condition.is_finite() && condition < 1e15 => {
            (0..n).map(|d| (s2 * inv[(d, d)]).max(0.0).sqrt()).collect()
        }
        _ => vec![f64::INFINITY; n],
    };

    Ok(LmOutcome {
        params: x,
        std_errors,
        residual_norm: cost.sqrt(),
        gradient_norm,
        iterations,
        converged,
        condition,
    })
}
