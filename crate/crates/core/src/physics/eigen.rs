use num_complex::Complex64;

use super::matrix::{adjoint, frobenius, identity, mul, zeros, CMatrix3};
use super::{HamiltonianMatrix, TransitionPair, MS_ZERO};
use crate::error::{invalid, Error, Result};

const MAX_SWEEPS: usize = 64;
const CONVERGENCE: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-9;
const MS0_TIE: f64 = 1e-9;

/// Spectral decomposition of a 3×3 Hermitian matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSystem {
    /// Eigen-energies in MHz, ascending.
    pub energies: [f64; 3],
    /// `states[k]` is the normalized eigenvector of `energies[k]` in the `{+1, 0, -1}` basis.
    pub states: [[Complex64; 3]; 3],
    /// Eigenstate with the largest `|⟨ms=0|ψ⟩|²`; ties go to the lowest energy.
    pub ms0_index: usize,
}

impl EigenSystem {
    /// `|⟨ms|ψ_k⟩|²` indexed `[k][ms]`.
    pub fn populations(&self) -> [[f64; 3]; 3] {
        self.states.map(|v| v.map(|c| c.norm_sqr()))
    }

    /// Transition frequencies from the ms=0-like state to the other two.
    pub fn transitions(&self) -> TransitionPair {
        let e0 = self.energies[self.ms0_index];
        let mut f: Vec<f64> = (0..3)
            .filter(|&k| k != self.ms0_index)
            .map(|k| (self.energies[k] - e0).abs())
            .collect();
        f.sort_by(f64::total_cmp);
        TransitionPair { omega_minus: f[0], omega_plus: f[1] }
    }

    /// Rebuilds `Σ E_k |ψ_k⟩⟨ψ_k|`.
    pub fn reconstruct(&self) -> CMatrix3 {
        let mut h = zeros();
        for k in 0..3 {
            let v = &self.states[k];
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] += self.energies[k] * v[i] * v[j].conj();
                }
            }
        }
        h
    }
}

/// Cyclic complex Jacobi diagonalization.
pub fn diagonalize(h: &HamiltonianMatrix) -> Result<EigenSystem> {
    let m = h.entries();
    if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let norm = frobenius(m);
    let deviation = h.hermiticity_deviation();
    if deviation > HERMITIAN_TOL * norm.max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }

    let (diag, vecs) = jacobi(m, norm);

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
    let energies = order.map(|k| diag[k]);
    // eigenvectors are the columns of `vecs`
    let states = order.map(|k| [vecs[0][k], vecs[1][k], vecs[2][k]]);

    let overlap = states.map(|v| v[MS_ZERO].norm_sqr());
    let best = overlap.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ms0_index = (0..3).find(|&k| best - overlap[k] < MS0_TIE).unwrap_or(0);

    Ok(EigenSystem { energies, states, ms0_index })
}

fn off_diagonal_norm(a: &CMatrix3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                s += a[i][j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn jacobi(m: &CMatrix3, norm: f64) -> ([f64; 3], CMatrix3) {
    let mut a = *m;
    let mut v = identity();
    if norm == 0.0 {
        return ([0.0; 3], v);
    }
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) < CONVERGENCE * norm {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            let r = apq.norm();
            if r == 0.0 {
                continue;
            }
            let phase = apq / r;
            let tau = (a[q][q].re - a[p][p].re) / (2.0 * r);
            let t = if tau >= 0.0 {
                1.0 / (tau + (1.0 + tau * tau).sqrt())
            } else {
                -1.0 / (-tau + (1.0 + tau * tau).sqrt())
            };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;

            // U = diag-phase(q) · real rotation(p, q)
            let mut u = identity();
            let back = phase.conj();
            u[p][p] = Complex64::new(c, 0.0);
            u[p][q] = Complex64::new(s, 0.0);
            u[q][p] = back * -s;
            u[q][q] = back * c;

            a = mul(&adjoint(&u), &mul(&a, &u));
            a[p][q] = Complex64::new(0.0, 0.0);
            a[q][p] = Complex64::new(0.0, 0.0);
            v = mul(&v, &u);
        }
    }
    ([a[0][0].re, a[1][1].re, a[2][2].re], v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Trigonometric roots of the characteristic cubic, ascending.
    fn cubic_roots(m: &CMatrix3) -> [f64; 3] {
        let q = (m[0][0].re + m[1][1].re + m[2][2].re) / 3.0;
        let mut b = *m;
        for (i, row) in b.iter_mut().enumerate() {
            row[i] -= q;
        }
        let tr_b2: f64 = b.iter().flatten().map(|z| z.norm_sqr()).sum();
        let p = (tr_b2 / 6.0).sqrt();
        if p == 0.0 {
            return [q; 3];
        }
        let c = b.map(|row| row.map(|z| z / p));
        let det = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
            - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
            + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
        let r = (det.re / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let hi = q + 2.0 * p * phi.cos();
        let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [lo, 3.0 * q - hi - lo, hi]
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, scale: f64) -> CMatrix3 {
        let mut m = zeros();
        for i in 0..3 {
            m[i][i] = Complex64::new(rng.gen_range(-scale..scale), 0.0);
            for j in (i + 1)..3 {
                let z = Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
                m[i][j] = z;
                m[j][i] = z.conj();
            }
        }
        m
    }

    #[test]
    fn identity_scaled_input() {
        let m = identity().map(|row| row.map(|z| z * 7.5));
        let eig = diagonalize(&HamiltonianMatrix::from_entries(m)).unwrap();
        assert_eq!(eig.energies, [7.5; 3]);
    }

    #[test]
    fn zero_matrix() {
        let eig = diagonalize(&HamiltonianMatrix::from_entries(zeros())).unwrap();
        assert_eq!(eig.energies, [0.0; 3]);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = identity();
        m[0][1] = Complex64::new(1.0, 0.0);
        let err = diagonalize(&HamiltonianMatrix::from_entries(m)).unwrap_err();
        assert!(matches!(err, Error::NotHermitian { .. }));
    }

    #[test]
    fn matches_cubic_oracle_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 0..10_000 {
            let scale = if n % 2 == 0 { 1.0 } else { 3000.0 };
            let m = random_hermitian(&mut rng, scale);
            let eig = diagonalize(&HamiltonianMatrix::from_entries(m)).unwrap();
            let roots = cubic_roots(&m);
            let norm = frobenius(&m);
            for k in 0..3 {
                assert!(
                    (eig.energies[k] - roots[k]).abs() <= 1e-8 * norm,
                    "draw {n}: {:?} vs {:?}",
                    eig.energies,
                    roots
                );
            }
            assert!(eig.energies[0] <= eig.energies[1] && eig.energies[1] <= eig.energies[2]);
            for a in 0..3 {
                for b in 0..3 {
                    let dot: Complex64 =
                        (0..3).map(|i| eig.states[a][i].conj() * eig.states[b][i]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).norm() < 1e-10);
                }
            }
            let rec = eig.reconstruct();
            for i in 0..3 {
                for j in 0..3 {
                    assert!((rec[i][j] - m[i][j]).norm() < 1e-9 * norm.max(1.0));
                }
            }
        }
    }

    #[test]
    fn ms0_tie_breaks_to_lowest_energy() {
        // ms=0 fully mixed with ms=+1: equal overlaps on two states.
        let mut m = zeros();
        m[0][1] = Complex64::new(1.0, 0.0);
        m[1][0] = Complex64::new(1.0, 0.0);
        let eig = diagonalize(&HamiltonianMatrix::from_entries(m)).unwrap();
        assert!((eig.energies[0] + 1.0).abs() < 1e-12);
        assert_eq!(eig.ms0_index, 0);
    }
}
