//! Seven-level rate model of the NV optical cycle.
//!
//! Levels are ordered `{g0, g+1, g-1, e0, e+1, e-1, s}`. A [`Generator`] `G`
//! acts on population vectors as `dp/dt = G p` with `G[to][from]` holding the
//! rate of `from → to`; every column sums to zero.

mod integrate;
mod montecarlo;
mod sequence;

pub use integrate::{evolve, evolve_with_photons, READOUT_MAX_STEP};
pub use sequence::{
    run_sequence, run_sequence_from, DecayHistogram, HistogramKind, PulseLength, PulseSequence,
    RunMode, Segment, SequenceResult, SpinContexts,
};

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::FieldVector;
use crate::physics::{esr_frequencies, EigenSystem, SpinParams, TransitionPair, MS_MINUS, MS_PLUS, MS_ZERO};

pub const N_LEVELS: usize = 7;

/// Level indices.
pub mod level {
    pub const G0: usize = 0;
    pub const G_PLUS: usize = 1;
    pub const G_MINUS: usize = 2;
    pub const E0: usize = 3;
    pub const E_PLUS: usize = 4;
    pub const E_MINUS: usize = 5;
    pub const SINGLET: usize = 6;
    pub const GROUND: [usize; 3] = [G0, G_PLUS, G_MINUS];
    pub const EXCITED: [usize; 3] = [E0, E_PLUS, E_MINUS];
}

/// Matrix-basis index (`{+1, 0, -1}`) of each triplet slot `{0, +1, -1}`.
const SLOT_TO_MS: [usize; 3] = [MS_ZERO, MS_PLUS, MS_MINUS];

/// Populations of the seven levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPopulations {
    pub p: [f64; N_LEVELS],
}

impl LevelPopulations {
    pub fn new(p: [f64; N_LEVELS]) -> Result<Self> {
        let pops = Self { p };
        pops.validate()?;
        Ok(pops)
    }

    /// Equal thirds in the ground triplet.
    pub fn thermal_ground() -> Self {
        let third = 1.0 / 3.0;
        Self { p: [third, third, third, 0.0, 0.0, 0.0, 0.0] }
    }

    pub fn pure(level: usize) -> Self {
        let mut p = [0.0; N_LEVELS];
        p[level] = 1.0;
        Self { p }
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.iter().any(|x| !x.is_finite() || *x < -1e-12) {
            return Err(invalid(format!("populations must be finite and >= 0, got {:?}", self.p)));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("populations must sum to 1, got {}", self.total())));
        }
        Ok(())
    }

    /// Clips round-off negatives to zero.
    pub(crate) fn clipped(mut self) -> Self {
        for x in self.p.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        self
    }

    pub fn ground(&self) -> f64 {
        level::GROUND.iter().map(|&i| self.p[i]).sum()
    }

    pub fn excited(&self) -> f64 {
        level::EXCITED.iter().map(|&i| self.p[i]).sum()
    }
}

/// Incoherent rates of the model, all in ns⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateParams {
    /// Spin-conserving g → e optical pumping while the laser is on.
    pub pump_rate: f64,
    /// Spin-conserving radiative e → g decay.
    pub gamma_rad: f64,
    /// e0 → s intersystem crossing.
    pub k_isc_0: f64,
    /// e±1 → s intersystem crossing.
    pub k_isc_1: f64,
    /// Singlet decay.
    pub gamma_s: f64,
    /// Fraction of singlet decay into g0; the rest splits evenly into g±1.
    pub branch_0: f64,
}

impl Default for RateParams {
    /// Lifetimes of 23 ns (ms=0) and 12.7 ns (ms=±1), all of the ms=0 decay
    /// radiative. The singlet lifetime (300 ns) and pump rate are literature
    /// placeholders.
    fn default() -> Self {
        let gamma_rad = 1.0 / 23.0;
        Self {
            pump_rate: 0.05,
            gamma_rad,
            k_isc_0: 0.0,
            k_isc_1: 1.0 / 12.7 - gamma_rad,
            gamma_s: 1.0 / 300.0,
            branch_0: 1.0,
        }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("pump_rate", self.pump_rate),
            ("gamma_rad", self.gamma_rad),
            ("k_isc_0", self.k_isc_0),
            ("k_isc_1", self.k_isc_1),
            ("gamma_s", self.gamma_s),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.branch_0) {
            return Err(invalid(format!("branch_0 must lie in [0, 1], got {}", self.branch_0)));
        }
        if self.k_isc_0 > self.k_isc_1 {
            return Err(invalid(format!(
                "k_isc_0 must not exceed k_isc_1, got {} > {}",
                self.k_isc_0, self.k_isc_1
            )));
        }
        Ok(())
    }

    /// Total decay rate of an excited sublevel with the given spin slot.
    pub fn excited_decay_rate(&self, ms_zero: bool) -> f64 {
        self.gamma_rad + if ms_zero { self.k_isc_0 } else { self.k_isc_1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
}

/// Which ms=0 ↔ ms=±1 transition a drive addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinTransition {
    /// 0 ↔ -1, the lower-frequency line `omega_minus`.
    Minus,
    /// 0 ↔ +1, the upper line `omega_plus`.
    Plus,
}

impl SpinTransition {
    pub fn frequency(&self, pair: &TransitionPair) -> f64 {
        match self {
            SpinTransition::Minus => pair.omega_minus,
            SpinTransition::Plus => pair.omega_plus,
        }
    }
}

/// Level pair `(ms=0, ms=±1)` addressed by a drive.
pub fn target_levels(manifold: Manifold, transition: SpinTransition) -> (usize, usize) {
    use level::*;
    match (manifold, transition) {
        (Manifold::Ground, SpinTransition::Minus) => (G0, G_MINUS),
        (Manifold::Ground, SpinTransition::Plus) => (G0, G_PLUS),
        (Manifold::Excited, SpinTransition::Minus) => (E0, E_MINUS),
        (Manifold::Excited, SpinTransition::Plus) => (E0, E_PLUS),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicrowaveDrive {
    /// MHz.
    pub frequency: f64,
    /// MHz.
    pub rabi_frequency: f64,
    /// Full width at half maximum of the addressed line, MHz.
    pub linewidth_fwhm: f64,
    pub target_manifold: Manifold,
    pub target_transition: SpinTransition,
}

impl MicrowaveDrive {
    pub fn validate(&self) -> Result<()> {
        if !self.frequency.is_finite() {
            return Err(invalid("drive frequency must be finite"));
        }
        if !self.rabi_frequency.is_finite() || self.rabi_frequency < 0.0 {
            return Err(invalid(format!("rabi_frequency must be >= 0, got {}", self.rabi_frequency)));
        }
        if !self.linewidth_fwhm.is_finite() || self.linewidth_fwhm <= 0.0 {
            return Err(invalid(format!("linewidth_fwhm must be > 0, got {}", self.linewidth_fwhm)));
        }
        Ok(())
    }

    /// Incoherent two-way transfer rate in ns⁻¹ for a line centred at `f0` (MHz):
    /// `Ω² / (2·FWHM) · L(f − f0)` with `L` a unit-peak Lorentzian.
    pub fn transfer_rate(&self, f0: f64) -> f64 {
        let half = 0.5 * self.linewidth_fwhm;
        let detuning = self.frequency - f0;
        let lorentz = half * half / (detuning * detuning + half * half);
        // MHz = µs⁻¹ → ns⁻¹
        1e-3 * self.rabi_frequency * self.rabi_frequency / (2.0 * self.linewidth_fwhm) * lorentz
    }
}

/// Ground and excited transition frequencies at the current field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsrContext {
    pub ground: TransitionPair,
    pub excited: TransitionPair,
}

impl EsrContext {
    pub fn from_params(gs: &SpinParams, es: &SpinParams, b_nv: &FieldVector) -> Result<Self> {
        Ok(Self { ground: esr_frequencies(gs, b_nv)?, excited: esr_frequencies(es, b_nv)? })
    }

    pub fn pair(&self, manifold: Manifold) -> &TransitionPair {
        match manifold {
            Manifold::Ground => &self.ground,
            Manifold::Excited => &self.excited,
        }
    }

    pub fn frequency(&self, manifold: Manifold, transition: SpinTransition) -> f64 {
        transition.frequency(self.pair(manifold))
    }
}

/// Rate generator, `G[to][from]` in ns⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    m: [[f64; N_LEVELS]; N_LEVELS],
}

impl Generator {
    /// Builds a generator from off-diagonal rates; the diagonal is filled so
    /// that every column sums to zero.
    pub fn from_rates(mut m: [[f64; N_LEVELS]; N_LEVELS]) -> Result<Self> {
        for from in 0..N_LEVELS {
            m[from][from] = 0.0;
            let mut out = 0.0;
            for to in 0..N_LEVELS {
                let r = m[to][from];
                if !r.is_finite() {
                    return Err(invalid(format!("non-finite rate {from} -> {to}")));
                }
                if r < 0.0 {
                    return Err(invalid(format!("negative rate {from} -> {to}: {r}")));
                }
                out += r;
            }
            m[from][from] = -out;
        }
        Ok(Self { m })
    }

    /// Wraps a full matrix, checking finiteness and column sums.
    pub fn from_matrix(m: [[f64; N_LEVELS]; N_LEVELS]) -> Result<Self> {
        let g = Self { m };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("generator has non-finite entries"));
        }
        let scale = self.m.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
        for col in 0..N_LEVELS {
            let s: f64 = (0..N_LEVELS).map(|r| self.m[r][col]).sum();
            if s.abs() > 1e-12 * scale {
                return Err(invalid(format!("generator column {col} sums to {s}")));
            }
            for row in 0..N_LEVELS {
                if row != col && self.m[row][col] < 0.0 {
                    return Err(invalid(format!("negative off-diagonal rate {col} -> {row}")));
                }
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> &[[f64; N_LEVELS]; N_LEVELS] {
        &self.m
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.m[to][from]
    }

    /// Total rate out of a level.
    pub fn out_rate(&self, from: usize) -> f64 {
        -self.m[from][from]
    }

    pub fn apply(&self, p: &[f64; N_LEVELS]) -> [f64; N_LEVELS] {
        let mut out = [0.0; N_LEVELS];
        for (i, row) in self.m.iter().enumerate() {
            out[i] = row.iter().zip(p).map(|(a, b)| a * b).sum();
        }
        out
    }
}

/// Spin-character weights of each triplet slot used to re-express the
/// spin-selective rates in an arbitrary eigenbasis. Optical transitions stay
/// slot-conserving (`e_k ↔ g_k`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMixing {
    /// `ground[j][m] = |⟨m|g_j⟩|²` with `m` in slot order `{0, +1, -1}`.
    pub ground: [[f64; 3]; 3],
    /// `excited[k][m] = |⟨m|e_k⟩|²`.
    pub excited: [[f64; 3]; 3],
}

impl SpinMixing {
    /// Pure `|ms⟩` eigenstates in both manifolds.
    pub fn unmixed() -> Self {
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        Self { ground: id, excited: id }
    }

    /// Weights from the eigenstates of both manifolds. Eigenstates are
    /// assigned to slots by spin character: the ms=0-like state to slot 0 and,
    /// of the other two, the one with more ms=+1 weight to slot +1.
    pub fn from_eigensystems(gs: &EigenSystem, es: &EigenSystem) -> Self {
        let g = slot_states(gs);
        let e = slot_states(es);
        let weights = |s: &[[num_complex::Complex64; 3]; 3]| {
            s.map(|v| SLOT_TO_MS.map(|m| v[m].norm_sqr()))
        };
        Self { ground: weights(&g), excited: weights(&e) }
    }
}

fn slot_states(eig: &EigenSystem) -> [[num_complex::Complex64; 3]; 3] {
    let zero = eig.ms0_index;
    let others: Vec<usize> = (0..3).filter(|&k| k != zero).collect();
    let plus_weight = |k: usize| eig.states[k][MS_PLUS].norm_sqr();
    let (plus, minus) = if plus_weight(others[0]) >= plus_weight(others[1]) {
        (others[0], others[1])
    } else {
        (others[1], others[0])
    };
    [eig.states[zero], eig.states[plus], eig.states[minus]]
}

/// Generator of the model in the `|ms⟩` basis with optional cw drives.
pub fn rate_matrix(
    rp: &RateParams,
    laser_on: bool,
    cw_drives: &[MicrowaveDrive],
    esr_context: Option<&EsrContext>,
) -> Result<Generator> {
    mixed_rate_matrix(rp, laser_on, &SpinMixing::unmixed(), cw_drives, esr_context)
}

/// Generator with rates re-expressed through the given spin mixing.
pub fn mixed_rate_matrix(
    rp: &RateParams,
    laser_on: bool,
    mixing: &SpinMixing,
    cw_drives: &[MicrowaveDrive],
    esr_context: Option<&EsrContext>,
) -> Result<Generator> {
    use level::*;
    rp.validate()?;
    if !cw_drives.is_empty() && esr_context.is_none() {
        return Err(invalid("cw microwave drive requires an ESR context"));
    }

    let mut m = [[0.0; N_LEVELS]; N_LEVELS];
    let isc_by_ms = [rp.k_isc_0, rp.k_isc_1, rp.k_isc_1];
    let half_rest = 0.5 * (1.0 - rp.branch_0);
    let branch_by_ms = [rp.branch_0, half_rest, half_rest];

    for k in 0..3 {
        if laser_on {
            m[EXCITED[k]][GROUND[k]] += rp.pump_rate;
        }
        m[GROUND[k]][EXCITED[k]] += rp.gamma_rad;
    }
    for k in 0..3 {
        let isc: f64 = (0..3).map(|s| mixing.excited[k][s] * isc_by_ms[s]).sum();
        m[SINGLET][EXCITED[k]] += isc;
    }
    for j in 0..3 {
        let branch: f64 = (0..3).map(|s| mixing.ground[j][s] * branch_by_ms[s]).sum();
        m[GROUND[j]][SINGLET] += rp.gamma_s * branch;
    }

    if let Some(ctx) = esr_context {
        for drive in cw_drives {
            drive.validate()?;
            let f0 = ctx.frequency(drive.target_manifold, drive.target_transition);
            let w = drive.transfer_rate(f0);
            let (a, b) = target_levels(drive.target_manifold, drive.target_transition);
            m[a][b] += w;
            m[b][a] += w;
        }
    }
    Generator::from_rates(m)
}

/// Unique stationary distribution of the generator.
pub fn steady_state(generator: &Generator) -> Result<LevelPopulations> {
    generator.validate()?;
    let g = SMatrix::<f64, N_LEVELS, N_LEVELS>::from_fn(|r, c| generator.m[r][c]);
    let svd = g.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| invalid("SVD failed"))?;
    let sv = svd.singular_values;
    let max = sv.max();
    if max == 0.0 {
        return Err(Error::DegenerateSteadyState { kernel_dim: N_LEVELS });
    }
    let tol = 1e-9 * max;
    let kernel_dim = sv.iter().filter(|&&s| s <= tol).count();
    if kernel_dim != 1 {
        return Err(Error::DegenerateSteadyState { kernel_dim });
    }
    let idx = sv.imin();
    let row = v_t.row(idx);
    let sum: f64 = row.iter().sum();
    if sum.abs() < 1e-300 {
        return Err(invalid("steady state kernel vector has zero total population"));
    }
    let mut p = [0.0; N_LEVELS];
    for (i, x) in row.iter().enumerate() {
        p[i] = x / sum;
    }
    Ok(LevelPopulations { p }.clipped())
}

/// Photon emission rate `γ_rad · (p_e0 + p_e+1 + p_e-1)`, photons per ns.
pub fn pl_rate(p: &LevelPopulations, rp: &RateParams) -> f64 {
    rp.gamma_rad * p.excited()
}

/// Coherent two-level transfer probability at each time (ns):
/// `Ω²/(Ω²+Δ²) · sin²(π √(Ω²+Δ²) t)` with frequencies in MHz.
pub fn rabi_curve(drive: &MicrowaveDrive, transition_frequency: f64, t_grid: &[f64]) -> Vec<f64> {
    let omega = drive.rabi_frequency;
    let detuning = drive.frequency - transition_frequency;
    let generalized = (omega * omega + detuning * detuning).sqrt();
    if generalized == 0.0 {
        return vec![0.0; t_grid.len()];
    }
    let amplitude = omega * omega / (generalized * generalized);
    t_grid
        .iter()
        .map(|&t_ns| {
            let s = (std::f64::consts::PI * generalized * t_ns * 1e-3).sin();
            amplitude * s * s
        })
        .collect()
}

/// Ground-state spin polarization `(p0 − p+1 − p-1) / (p0 + p+1 + p-1)`.
pub fn polarization(p: &LevelPopulations) -> Result<f64> {
    use level::*;
    let total = p.ground();
    if total <= 0.0 {
        return Err(Error::UndefinedPolarization);
    }
    Ok((p.p[G0] - p.p[G_PLUS] - p.p[G_MINUS]) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use level::*;

    fn gs_drive(frequency: f64) -> MicrowaveDrive {
        MicrowaveDrive {
            frequency,
            rabi_frequency: 5.0,
            linewidth_fwhm: 10.0,
            target_manifold: Manifold::Ground,
            target_transition: SpinTransition::Minus,
        }
    }

    fn zero_field_context() -> EsrContext {
        EsrContext::from_params(
            &SpinParams::ground_default(),
            &SpinParams::excited_default(),
            &FieldVector::default(),
        )
        .unwrap()
    }

    #[test]
    fn columns_sum_to_zero() {
        let rp = RateParams { k_isc_0: 0.01, branch_0: 0.6, ..RateParams::default() };
        let ctx = zero_field_context();
        let g = rate_matrix(&rp, true, &[gs_drive(2870.0)], Some(&ctx)).unwrap();
        g.validate().unwrap();
        for c in 0..N_LEVELS {
            for r in 0..N_LEVELS {
                if r != c {
                    assert!(g.matrix()[r][c] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn e0_leaves_at_radiative_plus_isc() {
        let rp = RateParams { k_isc_0: 0.004, ..RateParams::default() };
        let g = rate_matrix(&rp, false, &[], None).unwrap();
        assert_abs_diff_eq!(g.out_rate(E0), rp.gamma_rad + 0.004, epsilon = 1e-15);
    }

    #[test]
    fn default_minus_one_lifetime() {
        let rp = RateParams::default();
        assert_abs_diff_eq!(rp.k_isc_1, 0.035262, epsilon = 1e-6);
        let g = rate_matrix(&rp, false, &[], None).unwrap();
        assert_abs_diff_eq!(g.out_rate(E_MINUS), 1.0 / 12.7, epsilon = 1e-15);
        assert_abs_diff_eq!(g.out_rate(E0), 1.0 / 23.0, epsilon = 1e-15);
    }

    #[test]
    fn lorentzian_tail_suppression() {
        let on = gs_drive(2870.0).transfer_rate(2870.0);
        let off = gs_drive(2870.0 + 16.01 * 10.0).transfer_rate(2870.0);
        assert!(off < 1e-3 * on);
        // peak value Ω²/(2Γ) in MHz, converted to ns⁻¹
        assert_abs_diff_eq!(on, 1e-3 * 25.0 / 20.0, epsilon = 1e-15);
    }

    #[test]
    fn cw_drive_needs_context() {
        let err = rate_matrix(&RateParams::default(), true, &[gs_drive(2870.0)], None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn invalid_rates_rejected() {
        let rp = RateParams { k_isc_0: 0.1, k_isc_1: 0.01, ..RateParams::default() };
        assert!(rp.validate().is_err());
        let rp = RateParams { branch_0: 1.5, ..RateParams::default() };
        assert!(rp.validate().is_err());
        let rp = RateParams { gamma_s: -1.0, ..RateParams::default() };
        assert!(rp.validate().unwrap_err().to_string().contains("gamma_s"));
    }

    #[test]
    fn non_finite_generator_rejected() {
        let mut m = [[0.0; N_LEVELS]; N_LEVELS];
        m[1][0] = f64::NAN;
        assert!(Generator::from_rates(m).is_err());
        let mut m = [[0.0; N_LEVELS]; N_LEVELS];
        m[1][0] = 1.0;
        assert!(Generator::from_matrix(m).is_err());
    }

    #[test]
    fn steady_state_under_pumping_is_polarized() {
        let rp = RateParams::default();
        let g = rate_matrix(&rp, true, &[], None).unwrap();
        let ss = steady_state(&g).unwrap();
        for i in [G_PLUS, G_MINUS, E_PLUS, E_MINUS] {
            assert!(ss.p[i] < 1e-6, "level {i}: {}", ss.p[i]);
        }
        assert_abs_diff_eq!(ss.total(), 1.0, epsilon = 1e-12);
        assert!(polarization(&ss).unwrap() > 0.99);
        let residual = g.apply(&ss.p);
        assert!(residual.iter().all(|r| r.abs() < 1e-14));
    }

    #[test]
    fn resonant_drive_lowers_steady_pl() {
        let rp = RateParams::default();
        let ctx = zero_field_context();
        let off = steady_state(&rate_matrix(&rp, true, &[], None).unwrap()).unwrap();
        let on = steady_state(&rate_matrix(&rp, true, &[gs_drive(2870.0)], Some(&ctx)).unwrap()).unwrap();
        assert!(pl_rate(&on, &rp) < pl_rate(&off, &rp));
    }

    #[test]
    fn dark_steady_state_is_degenerate() {
        let g = rate_matrix(&RateParams::default(), false, &[], None).unwrap();
        let err = steady_state(&g).unwrap_err();
        assert_eq!(err, Error::DegenerateSteadyState { kernel_dim: 3 });
    }

    #[test]
    fn pl_rate_cases() {
        let rp = RateParams::default();
        assert_abs_diff_eq!(pl_rate(&LevelPopulations::pure(E0), &rp), 1.0 / 23.0, epsilon = 1e-15);
        assert_eq!(pl_rate(&LevelPopulations::thermal_ground(), &rp), 0.0);
        let a = LevelPopulations::pure(E0);
        let b = LevelPopulations::pure(G_MINUS);
        let mut mix = [0.0; N_LEVELS];
        for i in 0..N_LEVELS {
            mix[i] = 0.5 * (a.p[i] + b.p[i]);
        }
        let mix = LevelPopulations::new(mix).unwrap();
        assert_abs_diff_eq!(
            pl_rate(&mix, &rp),
            0.5 * (pl_rate(&a, &rp) + pl_rate(&b, &rp)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rabi_nutation() {
        let drive = MicrowaveDrive { rabi_frequency: 200.0, ..gs_drive(2844.0) };
        let p = rabi_curve(&drive, 2844.0, &[0.0, 2.5, 5.0]);
        assert_eq!(p[0], 0.0);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p[2], 0.0, epsilon = 1e-9);

        // Δ = Ω: generalized π time is 1 / (2·√2·Ω) µs
        let detuned = MicrowaveDrive { frequency: 2844.0 + 200.0, ..drive };
        let t_pi = 1e3 / (2.0 * 2f64.sqrt() * 200.0);
        assert_abs_diff_eq!(rabi_curve(&detuned, 2844.0, &[t_pi])[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn polarization_cases() {
        assert_abs_diff_eq!(polarization(&LevelPopulations::thermal_ground()).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(polarization(&LevelPopulations::pure(G0)).unwrap(), 1.0);
        assert_eq!(polarization(&LevelPopulations::pure(SINGLET)), Err(Error::UndefinedPolarization));
    }

    #[test]
    fn unmixed_weights_reproduce_plain_model() {
        let gs = crate::physics::diagonalize(
            &crate::physics::build_hamiltonian(&SpinParams::ground_default(), &FieldVector::new(0.0, 0.0, 100.0)).unwrap(),
        )
        .unwrap();
        let es = crate::physics::diagonalize(
            &crate::physics::build_hamiltonian(&SpinParams::excited_default(), &FieldVector::new(0.0, 0.0, 100.0)).unwrap(),
        )
        .unwrap();
        let mixing = SpinMixing::from_eigensystems(&gs, &es);
        let rp = RateParams { branch_0: 0.7, k_isc_0: 0.01, ..RateParams::default() };
        let a = mixed_rate_matrix(&rp, true, &mixing, &[], None).unwrap();
        let b = rate_matrix(&rp, true, &[], None).unwrap();
        for r in 0..N_LEVELS {
            for c in 0..N_LEVELS {
                assert_abs_diff_eq!(a.matrix()[r][c], b.matrix()[r][c], epsilon = 1e-15);
            }
        }
    }
}
