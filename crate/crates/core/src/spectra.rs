//! Synthetic observables: cw ODMR spectra, Zeeman scans and
//! level-anti-crossing (LAC) scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    mixed_rate_matrix, pl_rate, rate_matrix, steady_state, EsrContext, Manifold, MicrowaveDrive, RateParams,
    SpinMixing, SpinTransition,
};
use crate::error::{invalid, Result};
use crate::geometry::FieldVector;
use crate::physics::{build_hamiltonian, diagonalize, esr_frequencies, SpinParams};

/// Stencil width at which model-based dip refinement stops.
const DIP_TOLERANCE_MHZ: f64 = 1e-4;

/// Numerical noise floor of a steady-state PL value.
pub const PLATEAU_NOISE: f64 = 1e-9;

/// Drive strengths and linewidths applied to every transition of a manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveTemplate {
    pub gs_rabi_mhz: f64,
    pub gs_linewidth_mhz: f64,
    pub es_rabi_mhz: f64,
    pub es_linewidth_mhz: f64,
}

impl Default for DriveTemplate {
    /// Ground lines 10 MHz wide, excited lines 100 MHz wide; the Rabi
    /// frequencies are chosen to give visible, unsaturated dips.
    fn default() -> Self {
        Self { gs_rabi_mhz: 3.0, gs_linewidth_mhz: 10.0, es_rabi_mhz: 10.0, es_linewidth_mhz: 100.0 }
    }
}

impl DriveTemplate {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gs_rabi_mhz", self.gs_rabi_mhz), ("es_rabi_mhz", self.es_rabi_mhz)] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("gs_linewidth_mhz", self.gs_linewidth_mhz), ("es_linewidth_mhz", self.es_linewidth_mhz)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// The four drives (gs/es × 0↔±1) at one microwave frequency.
    pub fn drives_at(&self, frequency: f64) -> [MicrowaveDrive; 4] {
        let make = |m: Manifold, t: SpinTransition| {
            let (rabi, width) = match m {
                Manifold::Ground => (self.gs_rabi_mhz, self.gs_linewidth_mhz),
                Manifold::Excited => (self.es_rabi_mhz, self.es_linewidth_mhz),
            };
            MicrowaveDrive {
                frequency,
                rabi_frequency: rabi,
                linewidth_fwhm: width,
                target_manifold: m,
                target_transition: t,
            }
        };
        [
            make(Manifold::Ground, SpinTransition::Minus),
            make(Manifold::Ground, SpinTransition::Plus),
            make(Manifold::Excited, SpinTransition::Minus),
            make(Manifold::Excited, SpinTransition::Plus),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdmrSpectrum {
    /// MHz.
    pub frequency_grid: Vec<f64>,
    /// Steady-state PL divided by the undriven PL.
    pub pl: Vec<f64>,
    /// Refined dip centres, MHz.
    pub dips: Vec<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LacScan {
    /// Field magnitudes, gauss.
    pub b_grid: Vec<f64>,
    /// Tilt of the field from the NV axis, degrees.
    pub misalignment_deg: f64,
    pub pl: Vec<f64>,
    /// Refined PL minima, gauss.
    pub minima: Vec<f64>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeemanScanPoint {
    pub b_gauss: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
}

fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{what} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{what} grid has non-finite values")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{what} grid must be strictly ascending")));
    }
    Ok(())
}

/// Evenly spaced grid from `start` to `stop` inclusive with `steps` intervals.
pub fn linspace(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![start];
    }
    let h = (stop - start) / steps as f64;
    (0..=steps).map(|i| if i == steps { stop } else { start + i as f64 * h }).collect()
}

/// Local minima below `1 − 3·noise`, refined by a parabola through the
/// minimum and its two neighbours.
pub fn detect_dips(x: &[f64], y: &[f64], noise: f64) -> Vec<f64> {
    dip_indices(y, noise)
        .map(|i| parabolic_vertex([x[i - 1], x[i], x[i + 1]], [y[i - 1], y[i], y[i + 1]]))
        .collect()
}

fn dip_indices(y: &[f64], noise: f64) -> impl Iterator<Item = usize> + '_ {
    let threshold = 1.0 - 3.0 * noise;
    (1..y.len().saturating_sub(1)).filter(move |&i| y[i] < y[i - 1] && y[i] <= y[i + 1] && y[i] < threshold)
}

/// Repeated 3-point parabolic refinement of a minimum of `f` bracketed by
/// `[lo, hi]`, shrinking the stencil until it is below `tol`.
fn refine_minimum(f: impl Fn(f64) -> Result<f64>, lo: f64, c: f64, hi: f64, tol: f64) -> Result<f64> {
    let mut c = c;
    let mut s = (c - lo).min(hi - c);
    let mut fc = f(c)?;
    for _ in 0..200 {
        if s <= tol {
            break;
        }
        let (left, right) = ((c - s).max(lo), (c + s).min(hi));
        let (fl, fr) = (f(left)?, f(right)?);
        if fl < fc {
            (c, fc) = (left, fl);
        } else if fr < fc {
            (c, fc) = (right, fr);
        } else {
            let v = parabolic_vertex([left, c, right], [fl, fc, fr]).clamp(left, right);
            let fv = f(v)?;
            if fv <= fc {
                (c, fc) = (v, fv);
            }
            s /= 4.0;
        }
    }
    Ok(c)
}

fn parabolic_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let (a, b) = (x[1] - x[0], x[1] - x[2]);
    let (fa, fb) = (y[1] - y[2], y[1] - y[0]);
    let den = a * fa - b * fb;
    if den == 0.0 {
        return x[1];
    }
    x[1] - 0.5 * (a * a * fa - b * b * fb) / den
}

/// cw ODMR: steady-state PL under a microwave at each grid frequency, which
/// drives all four ms=0 ↔ ±1 transitions through their Lorentzian lines.
pub fn odmr_spectrum(
    gs: &SpinParams,
    es: &SpinParams,
    rp: &RateParams,
    template: &DriveTemplate,
    field_nv: &FieldVector,
    grid: &[f64],
) -> Result<OdmrSpectrum> {
    template.validate()?;
    check_grid(grid, "frequency")?;
    let ctx = EsrContext::from_params(gs, es, field_nv)?;
    let reference = pl_rate(&steady_state(&rate_matrix(rp, true, &[], None)?)?, rp);
    if !(reference > 0.0) {
        return Err(invalid("undriven steady state emits no light"));
    }

    let pl_at = |f: f64| -> Result<f64> {
        let g = rate_matrix(rp, true, &template.drives_at(f), Some(&ctx))?;
        Ok(pl_rate(&steady_state(&g)?, rp) / reference)
    };
    let pl = grid.par_iter().map(|&f| pl_at(f)).collect::<Result<Vec<f64>>>()?;

    let mut flags = Vec::new();
    if ctx.ground.omega_minus < template.gs_linewidth_mhz {
        flags.push(format!("ground-state line near zero frequency ({:.1} MHz): LAC region", ctx.ground.omega_minus));
    }
    if ctx.excited.omega_minus < template.es_linewidth_mhz {
        flags.push(format!("excited-state line near zero frequency ({:.1} MHz): LAC region", ctx.excited.omega_minus));
    }
    // grid minima are refined against the model itself, so centers do not
    // depend on the grid step even where lines overlap
    let dips = dip_indices(&pl, PLATEAU_NOISE)
        .map(|i| refine_minimum(pl_at, grid[i - 1], grid[i], grid[i + 1], DIP_TOLERANCE_MHZ))
        .collect::<Result<Vec<f64>>>()?;
    Ok(OdmrSpectrum { frequency_grid: grid.to_vec(), pl, dips, flags })
}

/// ESR line positions against an axial field.
pub fn zeeman_scan(params: &SpinParams, b_grid: &[f64]) -> Result<Vec<ZeemanScanPoint>> {
    params.validate()?;
    b_grid
        .iter()
        .map(|&b| {
            let t = esr_frequencies(params, &FieldVector::new(0.0, 0.0, b))?;
            Ok(ZeemanScanPoint { b_gauss: b, omega_minus: t.omega_minus, omega_plus: t.omega_plus })
        })
        .collect()
}

fn mixed_pl(gs: &SpinParams, es: &SpinParams, rp: &RateParams, field: &FieldVector) -> Result<f64> {
    let g_eig = diagonalize(&build_hamiltonian(gs, field)?)?;
    let e_eig = diagonalize(&build_hamiltonian(es, field)?)?;
    let mixing = SpinMixing::from_eigensystems(&g_eig, &e_eig);
    let g = mixed_rate_matrix(rp, true, &mixing, &[], None)?;
    Ok(pl_rate(&steady_state(&g)?, rp))
}

/// Steady-state PL against field magnitude, with the field tilted from the
/// NV axis by `misalignment_deg`. Spin-selective rates are re-expressed in
/// the instantaneous eigenbasis of each manifold, so PL drops wherever level
/// mixing is strong. PL is normalized to the unmixed model.
pub fn lac_scan(
    gs: &SpinParams,
    es: &SpinParams,
    rp: &RateParams,
    b_grid: &[f64],
    misalignment_deg: f64,
) -> Result<LacScan> {
    check_grid(b_grid, "field")?;
    if !misalignment_deg.is_finite() {
        return Err(invalid("misalignment must be finite"));
    }
    gs.validate()?;
    es.validate()?;
    let reference = pl_rate(&steady_state(&rate_matrix(rp, true, &[], None)?)?, rp);
    if !(reference > 0.0) {
        return Err(invalid("undriven steady state emits no light"));
    }
    let pl = b_grid
        .par_iter()
        .map(|&b| Ok(mixed_pl(gs, es, rp, &FieldVector::tilted(b, misalignment_deg))? / reference))
        .collect::<Result<Vec<f64>>>()?;

    let mut flags = Vec::new();
    if misalignment_deg == 0.0 && gs.e_strain == 0.0 && es.e_strain == 0.0 {
        flags.push("no misalignment and no strain: levels never mix, PL is flat".to_string());
    }
    let minima = detect_dips(b_grid, &pl, PLATEAU_NOISE);
    Ok(LacScan { b_grid: b_grid.to_vec(), misalignment_deg, pl, minima, flags })
}

/// Strain E that puts the lower transition at `target_omega_minus` for the
/// given field, found by bisection on `[0, D)`. The E of `params` is ignored.
pub fn calibrate_strain(params: &SpinParams, b_nv: &FieldVector, target_omega_minus: f64) -> Result<f64> {
    let f = |e: f64| -> Result<f64> {
        let p = SpinParams::new(params.d_zfs, e, params.g_factor)?;
        Ok(esr_frequencies(&p, b_nv)?.omega_minus - target_omega_minus)
    };
    let mut lo = 0.0;
    let mut hi = params.d_zfs * (1.0 - 1e-9);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo == 0.0 {
        return Ok(0.0);
    }
    if flo.signum() == fhi.signum() {
        return Err(invalid(format!(
            "target {target_omega_minus} MHz is unreachable for this field (omega_minus spans {} .. {} MHz)",
            flo + target_omega_minus,
            fhi + target_omega_minus
        )));
    }
    let s_lo = flo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 || hi - lo < 1e-10 {
            return Ok(mid);
        }
        if fm.signum() == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
