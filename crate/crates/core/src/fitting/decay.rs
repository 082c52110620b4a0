use super::lm::{levenberg_marquardt, LmConfig};
use super::FitResult;
use crate::dynamics::{DecayHistogram, HistogramKind};
use crate::error::{invalid, Error, Result};

const EDGE_EPS: f64 = 1e-9;

/// Single-exponential fit `A·exp(−t/τ)` over the bins lying inside `window`
/// (ns). Bin centres stand in for the arrival time. Expected-value histograms
/// are fitted by unweighted least squares. Counts histograms use Poisson
/// deviance residuals, so the fit is the Poisson maximum-likelihood estimate
/// and sparse tail bins do not bias τ low.
pub fn fit_exponential(hist: &DecayHistogram, window: (f64, f64)) -> Result<FitResult> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(invalid(format!("empty fit window [{t0}, {t1}]")));
    }
    let idx: Vec<usize> = (0..hist.len())
        .filter(|&i| hist.bin_edges[i] >= t0 - EDGE_EPS && hist.bin_edges[i + 1] <= t1 + EDGE_EPS)
        .collect();
    fit_bins(hist, &idx)
}

fn fit_bins(hist: &DecayHistogram, idx: &[usize]) -> Result<FitResult> {
    let centers = hist.bin_centers();
    let t: Vec<f64> = idx.iter().map(|&i| centers[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| hist.values[i]).collect();
    let positive = y.iter().filter(|&&v| v > 0.0).count();
    if positive == 0 {
        return Err(Error::FitDomain("no positive bins inside the fit window".into()));
    }
    if positive < 3 {
        return Err(Error::FitDomain(format!("need at least 3 positive bins, found {positive}")));
    }
    let poisson = matches!(hist.kind, HistogramKind::Counts { .. });
    let t_ref = t[0];
    let span = t[t.len() - 1] - t_ref;

    // log-linear regression on positive bins for the starting point
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (ti, yi) in t.iter().zip(&y) {
        if *yi > 0.0 {
            let x = ti - t_ref;
            let l = yi.ln();
            sx += x;
            sy += l;
            sxx += x * x;
            sxy += x * l;
            n += 1.0;
        }
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let mut rate0 = -slope;
    if !(rate0 > 0.0) || !rate0.is_finite() {
        rate0 = 1.0 / span.max(1e-9);
    }
    let amp0 = ((sy + rate0 * sx) / n).exp();

    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(t.iter()
            .zip(&y)
            .map(|(ti, &yi)| {
                let m = p[0] * (-p[1] * (ti - t_ref)).exp();
                if poisson {
                    deviance_residual(yi, m)
                } else {
                    m - yi
                }
            })
            .collect())
    };
    let out = levenberg_marquardt(residuals, &[amp0, rate0], &LmConfig::default())?;
    let (amp_ref, rate) = (out.params[0], out.params[1]);
    let (amp_err, rate_err) = (out.std_errors[0], out.std_errors[1]);

    let mut warnings = Vec::new();
    let mut converged = out.converged;
    // a rate this small means no measurable decay across the window
    let (tau, tau_err, amplitude) = if rate <= 1e-9 / span.max(1e-9) {
        converged = false;
        warnings.push("no decay within the window: lifetime is unbounded".to_string());
        (f64::INFINITY, f64::INFINITY, amp_ref)
    } else {
        let grow = (rate * t_ref).exp();
        (1.0 / rate, rate_err / (rate * rate), amp_ref * grow)
    };
    Ok(FitResult {
        names: vec!["amplitude".into(), "tau".into()],
        values: vec![amplitude, tau],
        std_errors: vec![amp_err * (rate * t_ref).exp(), tau_err],
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged,
        warnings,
    })
}

/// Signed square root of the Poisson deviance of `y` counts given mean `m`.
fn deviance_residual(y: f64, m: f64) -> f64 {
    let m = m.max(1e-300);
    let d = if y > 0.0 { m - y + y * (y / m).ln() } else { m };
    (m - y).signum() * (2.0 * d.max(0.0)).sqrt()
}

/// Independent exponential fits before and after `break_time` (ns). Bins
/// straddling the break are left out of both segments.
pub fn fit_piecewise_decay(hist: &DecayHistogram, break_time: f64) -> Result<FitResult> {
    let before: Vec<usize> = (0..hist.len()).filter(|&i| hist.bin_edges[i + 1] <= break_time + EDGE_EPS).collect();
    let after: Vec<usize> = (0..hist.len()).filter(|&i| hist.bin_edges[i] >= break_time - EDGE_EPS).collect();
    if before.len() < 3 || after.len() < 3 {
        return Err(invalid(format!(
            "break at {break_time} ns leaves {} bins before and {} after; need 3 each",
            before.len(),
            after.len()
        )));
    }
    let a = fit_bins(hist, &before)?;
    let b = fit_bins(hist, &after)?;
    let mut warnings: Vec<String> = a.warnings.iter().map(|w| format!("before: {w}")).collect();
    warnings.extend(b.warnings.iter().map(|w| format!("after: {w}")));
    Ok(FitResult {
        names: vec!["tau_before".into(), "tau_after".into()],
        values: vec![a.values[1], b.values[1]],
        std_errors: vec![a.std_errors[1], b.std_errors[1]],
        residual_norm: a.residual_norm.hypot(b.residual_norm),
        iterations: a.iterations + b.iterations,
        converged: a.converged && b.converged,
        warnings,
    })
}
