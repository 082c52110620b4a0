use super::lm::{levenberg_marquardt, LmConfig};
use super::FitResult;
use crate::error::{invalid, Error, Result};
use crate::geometry::FieldVector;
use crate::physics::{esr_frequencies, SpinParams, BOHR_MAGNETON_MHZ_PER_G};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `omega_minus`, decreasing with field.
    Minus,
    /// `omega_plus`, increasing with field.
    Plus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Minus => -1.0,
            Branch::Plus => 1.0,
        }
    }
}

/// One ESR line position at an axial field magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanPoint {
    pub b_gauss: f64,
    pub omega_mhz: f64,
    pub branch: Branch,
    /// Optional 1σ uncertainty of `omega_mhz`.
    pub sigma: Option<f64>,
}

impl ZeemanPoint {
    pub fn new(b_gauss: f64, omega_mhz: f64, branch: Branch) -> Self {
        Self { b_gauss, omega_mhz, branch, sigma: None }
    }
}

/// Linear fit of `ω = D ± gμB`, solved through its 2×2 normal equations.
/// `g` is reported as a magnitude, so swapping branch labels leaves the
/// result unchanged.
pub fn fit_zeeman(points: &[ZeemanPoint]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::RankDeficient(format!("{} points cannot fix D and g", points.len())));
    }
    let mut s = [0.0f64; 5]; // Σw, Σw·sB, Σw·B², Σw·ω, Σw·sB·ω
    for p in points {
        if !p.b_gauss.is_finite() || !p.omega_mhz.is_finite() {
            return Err(invalid("non-finite Zeeman point"));
        }
        let w = match p.sigma {
            Some(sig) if sig > 0.0 && sig.is_finite() => 1.0 / (sig * sig),
            Some(sig) => return Err(invalid(format!("sigma must be > 0, got {sig}"))),
            None => 1.0,
        };
        let x = p.branch.sign() * p.b_gauss;
        s[0] += w;
        s[1] += w * x;
        s[2] += w * x * x;
        s[3] += w * p.omega_mhz;
        s[4] += w * x * p.omega_mhz;
    }
    let det = s[0] * s[2] - s[1] * s[1];
    if !(det > 1e-12 * s[0] * s[2]) {
        return Err(Error::RankDeficient(
            "points need two distinct fields on one branch, or both branches".into(),
        ));
    }
    let d = (s[2] * s[3] - s[1] * s[4]) / det;
    let a = (s[0] * s[4] - s[1] * s[3]) / det;

    let n = points.len();
    let weighted = points.iter().any(|p| p.sigma.is_some());
    let mut rss = 0.0;
    for p in points {
        let w = p.sigma.map_or(1.0, |sig| 1.0 / (sig * sig));
        let r = p.omega_mhz - (d + a * p.branch.sign() * p.b_gauss);
        rss += w * r * r;
    }
    // with explicit sigmas the covariance is absolute; otherwise scale by the residual variance
    let scale = if weighted {
        1.0
    } else if n > 2 {
        rss / (n - 2) as f64
    } else {
        0.0
    };
    let var_d = scale * s[2] / det;
    let var_a = scale * s[0] / det;

    Ok(FitResult {
        names: vec!["D".into(), "g".into()],
        values: vec![d, a.abs() / BOHR_MAGNETON_MHZ_PER_G],
        std_errors: vec![var_d.sqrt(), var_a.sqrt() / BOHR_MAGNETON_MHZ_PER_G],
        residual_norm: rss.sqrt(),
        iterations: 1,
        converged: true,
        warnings: Vec::new(),
    })
}

/// One line position at an arbitrary field in the NV frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub field: FieldVector,
    pub omega_mhz: f64,
    pub branch: Branch,
}

/// Fits `(D, E, g)` of the full Hamiltonian to line positions.
/// `initial` is `[D, E, g]`; E enters the model as `|E|`.
pub fn fit_nonlinear_zeeman(points: &[FieldPoint], initial: [f64; 3], cfg: &LmConfig) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(invalid(format!("nonlinear Zeeman fit needs at least 4 points, got {}", points.len())));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial guess must be finite"));
    }
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let params = SpinParams::new(x[0], x[1].abs(), x[2])?;
        points
            .iter()
            .map(|pt| {
                let t = esr_frequencies(&params, &pt.field)?;
                let model = match pt.branch {
                    Branch::Minus => t.omega_minus,
                    Branch::Plus => t.omega_plus,
                };
                Ok(pt.omega_mhz - model)
            })
            .collect()
    };
    let out = levenberg_marquardt(residuals, &initial, cfg)?;
    let mut warnings = Vec::new();
    if !out.converged {
        warnings.push(format!(
            "no convergence after {} iterations (gradient {:e})",
            out.iterations, out.gradient_norm
        ));
    }
    Ok(FitResult {
        names: vec!["D".into(), "E".into(), "g".into()],
        values: vec![out.params[0], out.params[1].abs(), out.params[2]],
        std_errors: out.std_errors,
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged: out.converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::high_field_approx;

    fn synthetic(d: f64, g: f64, fields: &[f64]) -> Vec<ZeemanPoint> {
        let p = SpinParams::new(d, 0.0, g).unwrap();
        fields
            .iter()
            .flat_map(|&b| {
                let t = high_field_approx(&p, b);
                [ZeemanPoint::new(b, t.omega_minus, Branch::Minus), ZeemanPoint::new(b, t.omega_plus, Branch::Plus)]
            })
            .collect()
    }

    #[test]
    fn exact_recovery_without_noise() {
        let pts = synthetic(1423.0, 2.01, &[50.0, 100.0, 150.0, 200.0]);
        assert_eq!(pts.len(), 8);
        let fit = fit_zeeman(&pts).unwrap();
        assert!((fit.get("D").unwrap() - 1423.0).abs() < 1e-9);
        assert!((fit.get("g").unwrap() - 2.01).abs() < 1e-9);
    }

    #[test]
    fn two_point_determined_system() {
        let gmu = 2.01 * BOHR_MAGNETON_MHZ_PER_G;
        let pts = [
            ZeemanPoint::new(100.0, 1423.0 + gmu * 100.0, Branch::Plus),
            ZeemanPoint::new(200.0, 1423.0 + gmu * 200.0, Branch::Plus),
        ];
        let fit = fit_zeeman(&pts).unwrap();
        assert!((fit.get("D").unwrap() - 1423.0).abs() < 1e-9);
        assert!((fit.get("g").unwrap() - 2.01).abs() < 1e-12);
        assert_eq!(fit.std_errors, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_deficiency() {
        let pts = [
            ZeemanPoint::new(100.0, 1700.0, Branch::Plus),
            ZeemanPoint::new(100.0, 1701.0, Branch::Plus),
        ];
        assert!(matches!(fit_zeeman(&pts), Err(Error::RankDeficient(_))));
        assert!(matches!(fit_zeeman(&pts[..1]), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn branch_relabeling_is_exactly_invariant() {
        let mut pts = synthetic(1423.0, 2.01, &[60.0, 120.0, 250.0, 390.0]);
        for (i, p) in pts.iter_mut().enumerate() {
            p.omega_mhz += [3.1, -2.2, 0.7, -4.9, 1.3, 2.8, -0.4, 5.0][i];
        }
        let swapped: Vec<ZeemanPoint> = pts
            .iter()
            .map(|p| ZeemanPoint {
                branch: if p.branch == Branch::Plus { Branch::Minus } else { Branch::Plus },
                ..*p
            })
            .collect();
        let a = fit_zeeman(&pts).unwrap();
        let b = fit_zeeman(&swapped).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.std_errors, b.std_errors);
    }

    #[test]
    fn nonlinear_fit_needs_four_points() {
        let pt = FieldPoint { field: FieldVector::new(0.0, 0.0, 10.0), omega_mhz: 1400.0, branch: Branch::Minus };
        assert!(fit_nonlinear_zeeman(&[pt; 3], [1423.0, 0.0, 2.0], &LmConfig::default()).is_err());
    }
}
