//! Emitter-cavity coupling models for scanning-cavity microscopy of
//! color centers: cavity QED dynamics and spectra, spectral and lifetime
//! fitting, scan simulation and imaging, and photon and spin statistics.

pub mod dynamics;
pub mod error;
pub mod lsq;
pub mod model;
pub mod qstats;
pub mod scanfield;
pub mod spectro;

pub use error::{Error, Result, Violation};
pub use model::{
    CavityMode, CoupledSystemParams, DetectionCoeffs, EmissionBudget, Emitter, Series, Spectrum,
    SpinProfile, TimeTrace, Unit, Validate,
};
