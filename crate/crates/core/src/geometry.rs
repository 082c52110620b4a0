//! Crystal-frame bookkeeping: the four NV axes of the diamond lattice,
//! lab (cubic crystal) to NV frame changes, and field-rotation scans.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::physics::{esr_frequencies, SpinParams};

pub type Vec3 = [f64; 3];

/// Magnetic field in gauss. Whether it is in the lab or the NV frame is
/// decided by the caller; [`lab_to_nv`] converts between the two.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub const fn new(bx: f64, by: f64, bz: f64) -> Self {
        Self { bx, by, bz }
    }

    pub fn from_array(v: Vec3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> Vec3 {
        [self.bx, self.by, self.bz]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.to_array())
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(invalid(format!("field components must be finite, got {self:?}")))
        }
    }

    /// Field of magnitude `b` tilted by `misalignment_deg` from the NV axis
    /// towards the NV x axis, expressed in the NV frame.
    pub fn tilted(b: f64, misalignment_deg: f64) -> Self {
        let th = misalignment_deg.to_radians();
        Self::new(b * th.sin(), 0.0, b * th.cos())
    }
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: &Vec3) -> Result<Vec3> {
    let n = norm(a);
    if !n.is_finite() || n == 0.0 {
        return Err(invalid(format!("cannot normalize vector {a:?}")));
    }
    Ok(a.map(|c| c / n))
}

/// Rodrigues rotation of `v` by `angle_deg` about `axis` (right-handed).
/// The axis is normalized here; a zero axis is rejected.
pub fn rotate_about_axis(v: &Vec3, axis: &Vec3, angle_deg: f64) -> Result<Vec3> {
    let k = normalize(axis)?;
    let th = angle_deg.to_radians();
    let (s, c) = th.sin_cos();
    let kxv = cross(&k, v);
    let kdv = dot(&k, v);
    Ok([0, 1, 2].map(|i| v[i] * c + kxv[i] * s + k[i] * kdv * (1.0 - c)))
}

/// One of the four `<111>` NV symmetry axes with its transverse frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NvOrientation {
    axis: Vec3,
    x_axis: Vec3,
    y_axis: Vec3,
}

impl NvOrientation {
    pub const ALL_SIGNS: [[f64; 3]; 4] =
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];

    /// Builds the orientation along `axis`. The transverse x axis is the
    /// crystal [1,-1,0] direction projected onto the plane normal to `axis`.
    pub fn new(axis: Vec3) -> Result<Self> {
        let axis = normalize(&axis)?;
        let ref_dir = [1.0, -1.0, 0.0];
        let along = dot(&ref_dir, &axis);
        let mut x = [0, 1, 2].map(|i| ref_dir[i] - along * axis[i]);
        if norm(&x) < 1e-9 {
            // axis parallel to [1,-1,0]; fall back to [0,0,1]
            let alt = [0.0, 0.0, 1.0];
            let along = dot(&alt, &axis);
            x = [0, 1, 2].map(|i| alt[i] - along * axis[i]);
        }
        let x_axis = normalize(&x)?;
        let y_axis = cross(&axis, &x_axis);
        Ok(Self { axis, x_axis, y_axis })
    }

    /// The four tetrahedral NV axes, in the order of [`Self::ALL_SIGNS`].
    pub fn all() -> [Self; 4] {
        Self::ALL_SIGNS.map(|s| Self::new(s).expect("tetrahedral axes are nonzero"))
    }

    /// `[1,1,1]/√3`.
    pub fn default_111() -> Self {
        Self::all()[0]
    }

    pub fn axis(&self) -> Vec3 {
        self.axis
    }

    pub fn x_axis(&self) -> Vec3 {
        self.x_axis
    }

    pub fn y_axis(&self) -> Vec3 {
        self.y_axis
    }
}

/// Expresses a lab-frame field in the NV frame (z along the NV axis).
pub fn lab_to_nv(b: &FieldVector, o: &NvOrientation) -> FieldVector {
    let v = b.to_array();
    FieldVector::new(dot(&v, &o.x_axis), dot(&v, &o.y_axis), dot(&v, &o.axis))
}

/// A field of fixed magnitude rotated about a crystal axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationScan {
    rotation_axis: Vec3,
    pub b_magnitude: f64,
    /// Degrees, ascending.
    pub angle_grid: Vec<f64>,
}

impl RotationScan {
    pub fn new(rotation_axis: Vec3, b_magnitude: f64, angle_grid: Vec<f64>) -> Result<Self> {
        let rotation_axis = normalize(&rotation_axis)?;
        if !b_magnitude.is_finite() || b_magnitude < 0.0 {
            return Err(invalid(format!("b_magnitude must be >= 0, got {b_magnitude}")));
        }
        if angle_grid.iter().any(|a| !a.is_finite()) {
            return Err(invalid("angle grid contains non-finite values"));
        }
        if angle_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("angle grid must be strictly ascending"));
        }
        if let (Some(first), Some(last)) = (angle_grid.first(), angle_grid.last()) {
            if last - first > 360.0 {
                return Err(invalid("angle grid spans more than one 360° period"));
            }
        }
        Ok(Self { rotation_axis, b_magnitude, angle_grid })
    }

    /// Evenly spaced grid `[start, start + step, ...]` up to `stop` inclusive.
    pub fn uniform(rotation_axis: Vec3, b_magnitude: f64, start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(invalid("angle step must be > 0"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let grid = (0..n).map(|i| start + i as f64 * step).collect();
        Self::new(rotation_axis, b_magnitude, grid)
    }

    pub fn rotation_axis(&self) -> Vec3 {
        self.rotation_axis
    }

    /// Lab-frame field at one scan angle.
    pub fn field_at(&self, initial_direction: &Vec3, angle_deg: f64) -> Result<FieldVector> {
        let dir = normalize(initial_direction)?;
        let r = rotate_about_axis(&dir, &self.rotation_axis, angle_deg)?;
        Ok(FieldVector::from_array(r.map(|c| c * self.b_magnitude)))
    }
}

/// One row of a rotation scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub angle_deg: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
}

/// ESR frequencies of one NV orientation at every scan angle.
pub fn rotation_scan_frequencies(
    scan: &RotationScan,
    initial_direction: &Vec3,
    params: &SpinParams,
    orientation: &NvOrientation,
) -> Result<Vec<ScanPoint>> {
    params.validate()?;
    normalize(initial_direction)?;
    scan.angle_grid
        .par_iter()
        .map(|&angle| {
            let b_lab = scan.field_at(initial_direction, angle)?;
            let t = esr_frequencies(params, &lab_to_nv(&b_lab, orientation))?;
            Ok(ScanPoint { angle_deg: angle, omega_minus: t.omega_minus, omega_plus: t.omega_plus })
        })
        .collect()
}

/// The same scan evaluated for all four NV orientations.
pub fn rotation_scan_all_orientations(
    scan: &RotationScan,
    initial_direction: &Vec3,
    params: &SpinParams,
) -> Result<[Vec<ScanPoint>; 4]> {
    let o = NvOrientation::all();
    Ok([
        rotation_scan_frequencies(scan, initial_direction, params, &o[0])?,
        rotation_scan_frequencies(scan, initial_direction, params, &o[1])?,
        rotation_scan_frequencies(scan, initial_direction, params, &o[2])?,
        rotation_scan_frequencies(scan, initial_direction, params, &o[3])?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const S3: f64 = 0.577_350_269_189_625_8;

    #[test]
    fn quarter_turn_about_z() {
        let r = rotate_about_axis(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], 90.0).unwrap();
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn full_turn_is_identity() {
        let v = [0.3, -1.2, 2.5];
        let r = rotate_about_axis(&v, &[1.0, -1.0, 0.0], 360.0).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(r[i], v[i], epsilon = 1e-12);
        }
        let r0 = rotate_about_axis(&v, &[1.0, -1.0, 0.0], 0.0).unwrap();
        assert_eq!(r0, v);
    }

    #[test]
    fn nv_axis_lies_in_rotation_plane_of_1m10() {
        let a = [S3, S3, S3];
        let r = rotate_about_axis(&a, &[1.0, -1.0, 0.0], 0.0).unwrap();
        assert_abs_diff_eq!(dot(&r, &a), 1.0, epsilon = 1e-15);
        // the axis stays perpendicular to the rotation axis for every angle
        for deg in [10.0, 45.0, 133.0] {
            let r = rotate_about_axis(&a, &[1.0, -1.0, 0.0], deg).unwrap();
            assert_abs_diff_eq!(dot(&r, &[1.0, -1.0, 0.0]), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_axis_rejected() {
        assert!(rotate_about_axis(&[1.0, 0.0, 0.0], &[0.0; 3], 10.0).is_err());
    }

    #[test]
    fn orientation_frames_are_orthonormal() {
        for o in NvOrientation::all() {
            assert_abs_diff_eq!(dot(&o.axis(), &o.axis()), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(&o.x_axis(), &o.axis()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(&o.y_axis(), &o.axis()), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(dot(&o.x_axis(), &o.y_axis()), 0.0, epsilon = 1e-12);
        }
        let o = NvOrientation::default_111();
        let x = o.x_axis();
        assert_abs_diff_eq!(x[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn lab_to_nv_cases() {
        for o in NvOrientation::all() {
            let a = o.axis();
            let b = lab_to_nv(&FieldVector::from_array(a.map(|c| 43.0 * c)), &o);
            assert_abs_diff_eq!(b.bx, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b.by, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b.bz, 43.0, epsilon = 1e-12);

            let perp = o.y_axis().map(|c| 92.0 * c);
            let b = lab_to_nv(&FieldVector::from_array(perp), &o);
            assert_abs_diff_eq!(b.bz, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b.bx.hypot(b.by), 92.0, epsilon = 1e-9);
        }
        let b = lab_to_nv(&FieldVector::new(92.0, 0.0, 0.0), &NvOrientation::default_111());
        assert_abs_diff_eq!(b.bz, 53.12, epsilon = 0.005);
        assert_abs_diff_eq!(b.norm(), 92.0, epsilon = 1e-12);
    }

    #[test]
    fn scan_rejects_bad_grids() {
        assert!(RotationScan::new([0.0; 3], 92.0, vec![0.0]).is_err());
        assert!(RotationScan::new([1.0, 0.0, 0.0], 92.0, vec![1.0, 0.0]).is_err());
        assert!(RotationScan::new([1.0, 0.0, 0.0], 92.0, vec![0.0, 400.0]).is_err());
    }

    #[test]
    fn zero_field_scan_is_flat() {
        let p = SpinParams::new(1423.0, 20.0, 2.01).unwrap();
        let scan = RotationScan::uniform([1.0, -1.0, 0.0], 0.0, 0.0, 350.0, 10.0).unwrap();
        let pts = rotation_scan_frequencies(&scan, &[0.0, 0.0, 1.0], &p, &NvOrientation::default_111()).unwrap();
        for pt in pts {
            assert_abs_diff_eq!(pt.omega_minus, 1403.0, epsilon = 1e-9);
            assert_abs_diff_eq!(pt.omega_plus, 1443.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn all_orientations_scan() {
        let p = SpinParams::excited_default();
        let scan = RotationScan::uniform([1.0, -1.0, 0.0], 92.0, 0.0, 180.0, 30.0).unwrap();
        let all = rotation_scan_all_orientations(&scan, &[0.0, 0.0, 1.0], &p).unwrap();
        // [1,1,1] and [-1,-1,1] both lie in the rotation plane and see the same |cos|
        // profile mirrored; [1,-1,-1] and [-1,1,-1] see identical fields.
        for (a, b) in all[1].iter().zip(&all[2]) {
            assert_abs_diff_eq!(a.omega_minus, b.omega_minus, epsilon = 1e-9);
        }
    }
}
