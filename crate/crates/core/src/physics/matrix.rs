use num_complex::Complex64;

/// Dense 3×3 complex matrix, row-major.
pub type CMatrix3 = [[Complex64; 3]; 3];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) fn zeros() -> CMatrix3 {
    [[ZERO; 3]; 3]
}

pub(crate) fn identity() -> CMatrix3 {
    let mut m = zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    m
}

pub(crate) fn mul(a: &CMatrix3, b: &CMatrix3) -> CMatrix3 {
    let mut c = zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub(crate) fn adjoint(a: &CMatrix3) -> CMatrix3 {
    let mut c = zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[j][i].conj();
        }
    }
    c
}

pub(crate) fn frobenius(a: &CMatrix3) -> f64 {
    a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Standard S=1 spin matrices in the `{+1, 0, -1}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinOperators {
    pub sx: CMatrix3,
    pub sy: CMatrix3,
    pub sz: CMatrix3,
}

impl SpinOperators {
    pub fn new() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let re = |x: f64| Complex64::new(x, 0.0);
        let im = |x: f64| Complex64::new(0.0, x);
        let sx = [[ZERO, re(r), ZERO], [re(r), ZERO, re(r)], [ZERO, re(r), ZERO]];
        let sy = [[ZERO, im(-r), ZERO], [im(r), ZERO, im(-r)], [ZERO, im(r), ZERO]];
        let sz = [[re(1.0), ZERO, ZERO], [ZERO, ZERO, ZERO], [ZERO, ZERO, re(-1.0)]];
        Self { sx, sy, sz }
    }
}

impl Default for SpinOperators {
    fn default() -> Self {
        Self::new()
    }
}

/// Hermitian 3×3 Hamiltonian in MHz, basis `{+1, 0, -1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianMatrix {
    entries: CMatrix3,
}

impl HamiltonianMatrix {
    /// Wraps raw entries without checking Hermiticity; [`super::diagonalize`] checks.
    pub fn from_entries(entries: CMatrix3) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &CMatrix3 {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        (0..3).map(|i| self.entries[i][i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.entries)
    }

    /// Largest `|H_ij − conj(H_ji)|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                dev = dev.max((self.entries[i][j] - self.entries[j][i].conj()).norm());
            }
        }
        dev
    }
}
