//! S=1 spin Hamiltonian of one electronic manifold (ground or excited) and
//! the ESR transition frequencies that follow from it.
//!
//! Matrices are written in the fixed basis `{ms=+1, ms=0, ms=-1}` so that
//! `Sz = diag(1, 0, -1)`.

mod eigen;
mod matrix;

pub use eigen::{diagonalize, EigenSystem};
pub use matrix::{CMatrix3, HamiltonianMatrix, SpinOperators};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::FieldVector;

/// Bohr magneton divided by Planck's constant, in MHz per gauss.
pub const BOHR_MAGNETON_MHZ_PER_G: f64 = 1.3996245;

/// Index of each `ms` value in the matrix basis.
pub const MS_PLUS: usize = 0;
pub const MS_ZERO: usize = 1;
pub const MS_MINUS: usize = 2;

/// Physical constants shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub bohr_magneton_over_h: f64,
}

impl PhysicalConstants {
    pub const fn new() -> Self {
        Self { bohr_magneton_over_h: BOHR_MAGNETON_MHZ_PER_G }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::new()
    }
}

/// Fine-structure parameters of one triplet manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinParams {
    /// Axial zero-field splitting D, MHz.
    pub d_zfs: f64,
    /// Transverse (strain) splitting E, MHz.
    pub e_strain: f64,
    /// Isotropic g-factor.
    pub g_factor: f64,
}

impl SpinParams {
    pub fn new(d_zfs: f64, e_strain: f64, g_factor: f64) -> Result<Self> {
        let p = Self { d_zfs, e_strain, g_factor };
        p.validate()?;
        Ok(p)
    }

    /// Ground-state triplet with E = 0.
    pub fn ground_default() -> Self {
        Self { d_zfs: 2870.0, e_strain: 0.0, g_factor: 2.0028 }
    }

    /// Excited-state triplet of the bulk center with E = 0.
    pub fn excited_default() -> Self {
        Self { d_zfs: 1423.0, e_strain: 0.0, g_factor: 2.01 }
    }

    /// Checks the invariants and reports the offending field by name.
    pub fn validate(&self) -> Result<()> {
        let Self { d_zfs, e_strain, g_factor } = *self;
        if !d_zfs.is_finite() || d_zfs <= 0.0 {
            return Err(invalid(format!("d_zfs must be finite and > 0, got {d_zfs}")));
        }
        if !e_strain.is_finite() || e_strain < 0.0 {
            return Err(invalid(format!("e_strain must be finite and >= 0, got {e_strain}")));
        }
        if e_strain >= d_zfs {
            return Err(invalid(format!(
                "e_strain must be < d_zfs, got e_strain={e_strain} d_zfs={d_zfs}"
            )));
        }
        if !g_factor.is_finite() || g_factor <= 0.0 {
            return Err(invalid(format!("g_factor must be finite and > 0, got {g_factor}")));
        }
        Ok(())
    }

    /// Zeeman coefficient g·μ in MHz per gauss.
    pub fn zeeman_mhz_per_gauss(&self) -> f64 {
        self.g_factor * BOHR_MAGNETON_MHZ_PER_G
    }
}

/// The two ESR transition frequencies out of the ms=0-like eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    pub omega_minus: f64,
    pub omega_plus: f64,
}

impl TransitionPair {
    pub fn splitting(&self) -> f64 {
        self.omega_plus - self.omega_minus
    }
}

/// `H = D(Sz² − 2/3) + E(Sx² − Sy²) + gμ B·S` for a field given in the NV frame.
pub fn build_hamiltonian(params: &SpinParams, b_nv: &FieldVector) -> Result<HamiltonianMatrix> {
    params.validate()?;
    b_nv.validate()?;
    if b_nv.norm() >= 1e5 {
        return Err(invalid(format!("field magnitude {} G out of range", b_nv.norm())));
    }
    let ops = SpinOperators::new();
    let gmu = params.zeeman_mhz_per_gauss();
    let two_thirds = 2.0 / 3.0;

    let mut h = [[Complex64::new(0.0, 0.0); 3]; 3];
    let sz2 = matrix::mul(&ops.sz, &ops.sz);
    let sx2 = matrix::mul(&ops.sx, &ops.sx);
    let sy2 = matrix::mul(&ops.sy, &ops.sy);
    for i in 0..3 {
        for j in 0..3 {
            let ident = if i == j { two_thirds } else { 0.0 };
            h[i][j] = params.d_zfs * (sz2[i][j] - ident)
                + params.e_strain * (sx2[i][j] - sy2[i][j])
                + gmu * (b_nv.bx * ops.sx[i][j] + b_nv.by * ops.sy[i][j] + b_nv.bz * ops.sz[i][j]);
        }
    }
    Ok(HamiltonianMatrix::from_entries(h))
}

/// ESR frequencies `|E_k − E_ms0|` from the full diagonalization, lower first.
pub fn esr_frequencies(params: &SpinParams, b_nv: &FieldVector) -> Result<TransitionPair> {
    let h = build_hamiltonian(params, b_nv)?;
    let eig = diagonalize(&h)?;
    Ok(eig.transitions())
}

/// High-field closed form `D ± gμB`.
pub fn high_field_approx(params: &SpinParams, b_magnitude: f64) -> TransitionPair {
    let zeeman = params.zeeman_mhz_per_gauss() * b_magnitude;
    TransitionPair { omega_minus: params.d_zfs - zeeman, omega_plus: params.d_zfs + zeeman }
}

/// Axial field at which the ms=0 and ms=-1 levels cross (E = 0 closed form).
pub fn lac_field(params: &SpinParams) -> Result<f64> {
    params.validate()?;
    Ok(params.d_zfs / params.zeeman_mhz_per_gauss())
}
