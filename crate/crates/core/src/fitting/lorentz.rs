use super::lm::{levenberg_marquardt, LmConfig};
use super::{DataSeries, FitResult};
use crate::error::{invalid, Result};
use crate::spectra::OdmrSpectrum;

/// `1 − Σ c_k · (w_k/2)² / ((f − f_k)² + (w_k/2)²)` with parameters laid out
/// as `[f_0, w_0, c_0, f_1, w_1, c_1, ...]`.
pub fn lorentzian_dip_model(f: f64, params: &[f64]) -> f64 {
    1.0 - params
        .chunks_exact(3)
        .map(|p| {
            let half = 0.5 * p[1];
            let d = f - p[0];
            p[2] * half * half / (d * d + half * half)
        })
        .sum::<f64>()
}

fn initial_width(x: &[f64], y: &[f64], center: usize) -> f64 {
    let depth = 1.0 - y[center];
    let half_level = 1.0 - 0.5 * depth;
    let left = (0..center).rev().find(|&i| y[i] >= half_level).unwrap_or(0);
    let right = (center + 1..y.len()).find(|&i| y[i] >= half_level).unwrap_or(y.len() - 1);
    let w = x[right] - x[left];
    if w > 0.0 {
        w
    } else {
        (x[x.len() - 1] - x[0]) / 10.0
    }
}

/// Fits `initial_centers.len()` Lorentzian dips to a normalized spectrum.
/// Returns one result per dip with parameters `center`, `fwhm`, `contrast`;
/// all share the optimizer diagnostics.
pub fn fit_lorentzian_series(data: &DataSeries, initial_centers: &[f64]) -> Result<Vec<FitResult>> {
    if initial_centers.is_empty() {
        return Err(invalid("need at least one dip"));
    }
    let n_params = 3 * initial_centers.len();
    data.require_points(n_params)?;
    let (x, y) = (&data.x, &data.y);
    let (lo, hi) = (x[0].min(x[x.len() - 1]), x[0].max(x[x.len() - 1]));

    let mut p0 = Vec::with_capacity(n_params);
    for &c in initial_centers {
        if !(lo..=hi).contains(&c) {
            return Err(invalid(format!("initial centre {c} outside the grid [{lo}, {hi}]")));
        }
        let nearest = (0..x.len())
            .min_by(|&a, &b| (x[a] - c).abs().total_cmp(&(x[b] - c).abs()))
            .expect("non-empty");
        let contrast = (1.0 - y[nearest]).max(1e-6);
        p0.extend([c, initial_width(x, y, nearest), contrast]);
    }

    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        Ok((0..x.len()).map(|i| data.weight(i) * (lorentzian_dip_model(x[i], p) - y[i])).collect())
    };
    let out = levenberg_marquardt(residuals, &p0, &LmConfig::default())?;

    let mut warnings = Vec::new();
    let dips: Vec<[f64; 3]> = out.params.chunks_exact(3).map(|p| [p[0], p[1].abs(), p[2]]).collect();
    for i in 0..dips.len() {
        for j in (i + 1)..dips.len() {
            let width = dips[i][1].max(dips[j][1]);
            if (dips[i][0] - dips[j][0]).abs() < 0.25 * width {
                warnings.push(format!(
                    "dips {i} and {j} overlap within a quarter FWHM; covariance is poorly conditioned"
                ));
            }
        }
    }
    if !out.converged {
        warnings.push(format!("no convergence after {} iterations", out.iterations));
    }
    Ok(dips
        .iter()
        .enumerate()
        .map(|(k, d)| FitResult {
            names: vec!["center".into(), "fwhm".into(), "contrast".into()],
            values: d.to_vec(),
            std_errors: out.std_errors[3 * k..3 * k + 3].to_vec(),
            residual_norm: out.residual_norm,
            iterations: out.iterations,
            converged: out.converged,
            warnings: warnings.clone(),
        })
        .collect())
}

/// [`fit_lorentzian_series`] on a synthesized spectrum.
pub fn fit_lorentzian_dips(spectrum: &OdmrSpectrum, initial_centers: &[f64]) -> Result<Vec<FitResult>> {
    let data = DataSeries::new(spectrum.frequency_grid.clone(), spectrum.pl.clone(), None)?;
    fit_lorentzian_series(&data, initial_centers)
}
