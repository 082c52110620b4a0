//! Scenario configuration: JSON schema, defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nv_odmr::dynamics::RateParams;
use nv_odmr::geometry::{cross, lab_to_nv, norm, normalize, rotate_about_axis, NvOrientation, Vec3};
use nv_odmr::spectra::DriveTemplate;
use nv_odmr::{FieldVector, SpinParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub ground: SpinParams,
    pub excited: SpinParams,
    pub rates: RateParams,
    pub orientation: OrientationSpec,
    pub field: FieldSpec,
    pub drive: DriveTemplate,
    pub pulses: PulseDefaults,
    pub output: OutputSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            ground: SpinParams::ground_default(),
            excited: SpinParams::excited_default(),
            rates: RateParams::default(),
            orientation: OrientationSpec::default(),
            field: FieldSpec::default(),
            drive: DriveTemplate::default(),
            pulses: PulseDefaults::default(),
            output: OutputSpec::default(),
        }
    }
}

/// NV symmetry axis in crystal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientationSpec {
    pub axis: Vec3,
}

impl Default for OrientationSpec {
    fn default() -> Self {
        Self { axis: [1.0, 1.0, 1.0] }
    }
}

/// Either an explicit crystal-frame `vector`, or a `magnitude` along `axis`
/// (the NV axis when omitted) tilted by `misalignment_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec3>,
    #[serde(default)]
    pub misalignment_deg: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self { vector: None, magnitude: Some(0.0), axis: None, misalignment_deg: 0.0 }
    }
}

impl FieldSpec {
    fn validate(&self) -> Result<(), String> {
        match (self.vector, self.magnitude) {
            (Some(_), Some(_)) => return Err("field: give either vector or magnitude, not both".into()),
            (None, None) => return Err("field: one of vector or magnitude is required".into()),
            (Some(v), None) => {
                if self.axis.is_some() || self.misalignment_deg != 0.0 {
                    return Err("field.axis: axis and misalignment_deg only apply with magnitude".into());
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err("field.vector: components must be finite".into());
                }
            }
            (None, Some(m)) => {
                if !m.is_finite() || m < 0.0 {
                    return Err(format!("field.magnitude: must be finite and >= 0, got {m}"));
                }
            }
        }
        if !self.misalignment_deg.is_finite() {
            return Err("field.misalignment_deg: must be finite".into());
        }
        if let Some(a) = self.axis {
            if normalize(&a).is_err() {
                return Err("field.axis: must be a non-zero vector".into());
            }
        }
        Ok(())
    }

    /// Same direction, new magnitude.
    pub fn with_magnitude(&self, b: f64) -> Self {
        match self.vector {
            Some(v) if norm(&v) > 0.0 => Self { vector: Some(v.map(|c| c * b / norm(&v))), ..*self },
            Some(_) => Self { vector: None, magnitude: Some(b), ..*self },
            None => Self { magnitude: Some(b), ..*self },
        }
    }

    /// The field expressed in the NV frame.
    pub fn to_nv(&self, orientation: &NvOrientation) -> Result<FieldVector, String> {
        if let Some(v) = self.vector {
            return Ok(lab_to_nv(&FieldVector::from_array(v), orientation));
        }
        let b = self.magnitude.unwrap_or(0.0);
        let Some(axis) = self.axis else {
            return Ok(FieldVector::tilted(b, self.misalignment_deg));
        };
        let dir = normalize(&axis).map_err(|e| format!("field.axis: {e}"))?;
        let lab = if self.misalignment_deg == 0.0 {
            dir
        } else {
            let reference = if dir[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
            rotate_about_axis(&dir, &cross(&dir, &reference), self.misalignment_deg).map_err(|e| e.to_string())?
        };
        Ok(lab_to_nv(&FieldVector::from_array(lab.map(|c| c * b)), orientation))
    }
}

/// Defaults for pulsed protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseDefaults {
    pub gs_pi_rabi_mhz: f64,
    pub es_pi_rabi_mhz: f64,
    pub fidelity: f64,
    pub window_ns: f64,
    pub bin_ns: f64,
}

impl Default for PulseDefaults {
    fn default() -> Self {
        Self {
            gs_pi_rabi_mhz: 10.0,
            es_pi_rabi_mhz: 200.0,
            fidelity: 1.0,
            window_ns: 200.0,
            bin_ns: 0.5,
        }
    }
}

impl PulseDefaults {
    fn validate(&self) -> Result<(), String> {
        for (key, v) in [
            ("gs_pi_rabi_mhz", self.gs_pi_rabi_mhz),
            ("es_pi_rabi_mhz", self.es_pi_rabi_mhz),
            ("window_ns", self.window_ns),
            ("bin_ns", self.bin_ns),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("pulses.{key}: must be finite and > 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            return Err(format!("pulses.fidelity: must lie in [0, 1], got {}", self.fidelity));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Default output path when `--out` is not given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        fn section<T>(name: &str, r: nv_odmr::Result<T>) -> Result<(), String> {
            r.map(|_| ()).map_err(|e| format!("{name}: {e}"))
        }
        section("ground", self.ground.validate())?;
        section("excited", self.excited.validate())?;
        section("rates", self.rates.validate())?;
        section("drive", self.drive.validate())?;
        NvOrientation::new(self.orientation.axis).map_err(|e| format!("orientation.axis: {e}"))?;
        self.field.validate()?;
        self.pulses.validate()?;
        Ok(())
    }

    pub fn nv_orientation(&self) -> NvOrientation {
        NvOrientation::new(self.orientation.axis).expect("validated on load")
    }

    pub fn field_nv(&self) -> Result<FieldVector, CliError> {
        self.field.to_nv(&self.nv_orientation()).map_err(CliError::Validation)
    }

    /// Canonical JSON text; the manifest hash is taken over this.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Validation(if path == "." { format!("config: {}", e.inner()) } else { format!("{path}: {}", e.inner()) })
    })?;
    cfg.validate().map_err(CliError::Validation)?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message(r: Result<ScenarioConfig, CliError>) -> String {
        match r {
            Err(CliError::Validation(m)) => m,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_a_schema_error() {
        assert!(message(parse_config("")).starts_with("config:"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let m = message(parse_config(r#"{"excited": {"d_zfs": 1423, "e_strain": 0, "g_factor": 2.01, "dz": 1}}"#));
        assert!(m.contains("excited") && m.contains("dz"), "{m}");
        let m = message(parse_config(r#"{"colour": "red"}"#));
        assert!(m.contains("colour"), "{m}");
    }

    #[test]
    fn strain_above_d_names_the_key() {
        let m = message(parse_config(r#"{"excited": {"d_zfs": 1423, "e_strain": 2000, "g_factor": 2.01}}"#));
        assert!(m.starts_with("excited:") && m.contains("e_strain"), "{m}");
    }

    #[test]
    fn field_spec_forms() {
        assert!(parse_config(r#"{"field": {"vector": [1, 2, 3], "magnitude": 3}}"#).is_err());
        assert!(parse_config(r#"{"field": {"magnitude": -1}}"#).is_err());
        let cfg = parse_config(r#"{"field": {"vector": [10, 10, 10]}}"#).unwrap();
        let b = cfg.field_nv().unwrap();
        assert!((b.bz - 300f64.sqrt()).abs() < 1e-9 && b.bx.abs() < 1e-9);
        let cfg = parse_config(r#"{"field": {"magnitude": 20, "misalignment_deg": 90}}"#).unwrap();
        let b = cfg.field_nv().unwrap();
        assert!((b.bx - 20.0).abs() < 1e-9 && b.bz.abs() < 1e-9);
        let cfg = parse_config(r#"{"field": {"magnitude": 5, "axis": [0, 0, 1], "misalignment_deg": 30}}"#).unwrap();
        assert!((cfg.field_nv().unwrap().norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trip_is_idempotent() {
        let cfg = parse_config(r#"{"field": {"magnitude": 43}, "output": {"path": "x.csv"}}"#).unwrap();
        let once = cfg.canonical_json();
        let twice = parse_config(&once).unwrap().canonical_json();
        assert_eq!(once, twice);
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = ScenarioConfig::default();
        let mut other = base.clone();
        assert_eq!(base.sha256(), other.sha256());
        other.rates.gamma_s *= 1.0 + 1e-12;
        assert_ne!(base.sha256(), other.sha256());
    }
}
