//! Least-squares parameter recovery.

mod decay;
mod lm;
mod lorentz;
mod zeeman;

pub use decay::{fit_exponential, fit_piecewise_decay};
pub use lm::{levenberg_marquardt, LmConfig, LmOutcome};
pub use lorentz::{fit_lorentzian_dips, fit_lorentzian_series, lorentzian_dip_model};
pub use zeeman::{fit_nonlinear_zeeman, fit_zeeman, Branch, FieldPoint, ZeemanPoint};

use crate::error::{invalid, Result};

/// Named parameter estimates with their uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// Residual-variance-scaled diagonal of `(JᵀJ)⁻¹`, approximate.
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.values[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.std_errors[i])
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Plain-text report, one parameter per line.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for ((n, v), e) in self.names.iter().zip(&self.values).zip(&self.std_errors) {
            s.push_str(&format!("{n} = {v} ± {e}\n"));
        }
        s.push_str(&format!(
            "residual_norm = {}\niterations = {}\nconverged = {}\n",
            self.residual_norm, self.iterations, self.converged
        ));
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }
}

/// Paired samples with optional per-point uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl DataSeries {
    pub fn new(x: Vec<f64>, y: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(invalid(format!("x has {} points but y has {}", x.len(), y.len())));
        }
        if let Some(s) = &sigma {
            if s.len() != x.len() {
                return Err(invalid("sigma must match the data length"));
            }
            if s.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(invalid("sigma values must be finite and > 0"));
            }
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("data contain non-finite values"));
        }
        Ok(Self { x, y, sigma })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub(crate) fn require_points(&self, n_params: usize) -> Result<()> {
        if self.len() < n_params + 1 {
            return Err(invalid(format!(
                "{} points cannot constrain {} parameters (need at least {})",
                self.len(),
                n_params,
                n_params + 1
            )));
        }
        Ok(())
    }

    pub(crate) fn weight(&self, i: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| 1.0 / s[i])
    }
}
