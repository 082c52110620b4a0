//! Adaptive Dormand–Prince 5(4) integration of `dp/dt = G p`.

use super::{Generator, LevelPopulations, N_LEVELS};
use crate::error::{invalid, Result};

/// Absolute tolerance per component.
pub const ABS_TOL: f64 = 1e-10;
/// Largest step inside readout windows, ns.
pub const READOUT_MAX_STEP: f64 = 0.1;

const N: usize = N_LEVELS + 1;
type State = [f64; N];

// autonomous system: stage times are not needed
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Augmented right-hand side: populations plus accumulated photon count.
fn rhs(g: &Generator, weights: &[f64; N_LEVELS], y: &State) -> State {
    let mut p = [0.0; N_LEVELS];
    p.copy_from_slice(&y[..N_LEVELS]);
    let dp = g.apply(&p);
    let mut out = [0.0; N];
    out[..N_LEVELS].copy_from_slice(&dp);
    out[N_LEVELS] = weights.iter().zip(&p).map(|(w, x)| w * x).sum();
    out
}

fn combine(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (coef, k) in terms {
        for i in 0..N {
            out[i] += h * coef * k[i];
        }
    }
    out
}

fn integrate(g: &Generator, weights: &[f64; N_LEVELS], y0: State, duration: f64, max_step: f64) -> State {
    let mut y = y0;
    let mut t = 0.0;
    let mut h = duration.min(max_step).min(1.0);
    let mut k1 = rhs(g, weights, &y);
    while t < duration {
        if t + h > duration {
            h = duration - t;
        }
        let k2 = rhs(g, weights, &combine(&y, h, &[(A21, &k1)]));
        let k3 = rhs(g, weights, &combine(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(g, weights, &combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(g, weights, &combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(
            g,
            weights,
            &combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = combine(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(g, weights, &y_new);

        let mut err: f64 = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err = err.max(e.abs() / ABS_TOL);
        }

        let remaining_is_last = t + h >= duration;
        if err <= 1.0 {
            t = if remaining_is_last { duration } else { t + h };
            y = y_new;
            k1 = k7;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(max_step);
        if h < 1e-12 * duration.max(1.0) {
            h = 1e-12 * duration.max(1.0);
        }
    }
    y
}

fn check(duration: f64, max_step: f64) -> Result<()> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(invalid(format!("duration must be finite and >= 0, got {duration}")));
    }
    if !(max_step > 0.0) {
        return Err(invalid("max_step must be > 0"));
    }
    Ok(())
}

/// Propagates populations for `duration` ns under `G`.
pub fn evolve(p0: &LevelPopulations, generator: &Generator, duration: f64) -> Result<LevelPopulations> {
    evolve_with_photons(p0, generator, duration, &[0.0; N_LEVELS], f64::INFINITY).map(|(p, _)| p)
}

/// Like [`evolve`], also returning `∫ Σ w_i p_i dt` over the interval.
pub fn evolve_with_photons(
    p0: &LevelPopulations,
    generator: &Generator,
    duration: f64,
    weights: &[f64; N_LEVELS],
    max_step: f64,
) -> Result<(LevelPopulations, f64)> {
    generator.validate()?;
    check(duration, max_step)?;
    if duration == 0.0 {
        return Ok((*p0, 0.0));
    }
    let mut y0 = [0.0; N];
    y0[..N_LEVELS].copy_from_slice(&p0.p);
    let y = integrate(generator, weights, y0, duration, max_step);
    let mut p = [0.0; N_LEVELS];
    p.copy_from_slice(&y[..N_LEVELS]);
    Ok((LevelPopulations { p }.clipped(), y[N_LEVELS]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{level, rate_matrix, steady_state, RateParams};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_duration_is_identity() {
        let g = rate_matrix(&RateParams::default(), true, &[], None).unwrap();
        let p0 = LevelPopulations::thermal_ground();
        assert_eq!(evolve(&p0, &g, 0.0).unwrap(), p0);
    }

    #[test]
    fn single_exponential_decay_of_e0() {
        let g = rate_matrix(&RateParams::default(), false, &[], None).unwrap();
        let p0 = LevelPopulations::pure(level::E0);
        for t in [1.0, 10.0, 50.0, 200.0] {
            let p = evolve(&p0, &g, t).unwrap();
            assert_abs_diff_eq!(p.p[level::E0], (-t / 23.0).exp(), epsilon = 1e-6);
        }
        let p = evolve(&p0, &g, 10.0).unwrap();
        assert_abs_diff_eq!(p.p[level::E0], 0.647405, epsilon = 1e-6);
    }

    #[test]
    fn photons_integrate_the_emission_rate() {
        let rp = RateParams::default();
        let g = rate_matrix(&rp, false, &[], None).unwrap();
        let w = [0.0, 0.0, 0.0, rp.gamma_rad, rp.gamma_rad, rp.gamma_rad, 0.0];
        let (_, n) = evolve_with_photons(&LevelPopulations::pure(level::E0), &g, 30.0, &w, READOUT_MAX_STEP).unwrap();
        // ∫ γ e^{-t/τ} dt with γτ = 1
        assert_abs_diff_eq!(n, 1.0 - (-30.0f64 / 23.0).exp(), epsilon = 1e-8);
    }

    #[test]
    fn long_evolution_conserves_and_reaches_steady_state() {
        let rp = RateParams { branch_0: 0.8, k_isc_0: 0.005, ..RateParams::default() };
        let g = rate_matrix(&rp, true, &[], None).unwrap();
        let p = evolve(&LevelPopulations::thermal_ground(), &g, 10_000.0).unwrap();
        assert_abs_diff_eq!(p.total(), 1.0, epsilon = 1e-9);
        let ss = steady_state(&g).unwrap();
        for i in 0..N_LEVELS {
            assert_abs_diff_eq!(p.p[i], ss.p[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn negative_duration_rejected() {
        let g = rate_matrix(&RateParams::default(), true, &[], None).unwrap();
        assert!(evolve(&LevelPopulations::thermal_ground(), &g, -1.0).is_err());
    }
}
