//! Spin physics of single nitrogen-vacancy centers in diamond.
//!
//! The crate is organised by concern:
//!
//! - [`physics`]: the S=1 spin Hamiltonian, its diagonalization and the ESR
//!   transition frequencies derived from it.
//! - [`geometry`]: NV orientations in the cubic crystal, lab to NV frame
//!   changes and field-rotation scans.
//! - [`dynamics`]: a seven-level rate model of the optical cycle with a
//!   pulse-sequence engine (deterministic and Monte Carlo).
//! - [`spectra`]: cw ODMR spectra, Zeeman scans and level-anti-crossing scans.
//! - [`fitting`]: least-squares recovery of physical parameters.
//!
//! Units are fixed crate-wide: MHz for energies and frequencies (h = 1),
//! gauss for fields, nanoseconds for times and ns⁻¹ for rates.

pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod physics;
pub mod spectra;

pub use error::{Error, Result};
pub use geometry::FieldVector;
pub use physics::{SpinParams, TransitionPair};
