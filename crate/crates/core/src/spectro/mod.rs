//! Detected-spectrum model, spectral and lifetime fitting, and the
//! wavelength-resolved rate algebra used to extract Purcell factors.
//!
//! The detected spectrum relative to the bare emitter spectrum `I0` is
//!
//! ```text
//! S(w) = I0(w) * [ C_nv + sum_m ( C_cav f_m |L_m(w)|^2 + 2 C_int Re(e^{i dphi} sqrt(f_m) L_m(w)) ) ]
//! L_m(w) = 1 / (1 + i (w - w_m) / kappa_m)
//! ```
//!
//! with `kappa_m = w_m / (2 Q_m)` the half width. Modes add independently;
//! cross-mode interference is neglected.

mod fit;
mod lifetime;
mod rates;

pub use fit::{fit_spectrum, FitProvenance, ModeEstimate, SpectrumFit, SpectrumFitOptions, Weighting};
pub use lifetime::{fit_lifetime, LifetimeFit, LifetimeOptions};
pub use rates::{
    branching_fractions, intensity_model, purcell_spectrum, BranchingFractions, PurcellSpectrum,
    PURCELL_MASK_FLOOR,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    omega_from_wavelength, wavelength_from_omega, CavityMode, DetectionCoeffs, Series, Spectrum, Unit,
    Validate,
};

/// Cavity line shape `1 / (1 + i (omega - omega_c) / kappa_hwhm)`.
#[inline]
pub fn lorentzian(omega: f64, omega_c: f64, kappa_hwhm: f64) -> Complex64 {
    Complex64::new(1.0, (omega - omega_c) / kappa_hwhm).inv()
}

/// One cavity resonance as it enters the detected spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeLine {
    /// rad/ns
    pub omega_c: f64,
    /// Half width, rad/ns.
    pub kappa_hwhm: f64,
    /// Emission-rate enhancement into the mode relative to the background.
    pub f_c: f64,
}

impl ModeLine {
    pub fn from_wavelength(lambda_nm: f64, q_factor: f64, f_c: f64) -> Self {
        let omega_c = omega_from_wavelength(lambda_nm);
        Self {
            omega_c,
            kappa_hwhm: omega_c / (2.0 * q_factor),
            f_c,
        }
    }

    pub fn from_mode(mode: &CavityMode, f_c: f64) -> Self {
        Self::from_wavelength(mode.lambda_c, mode.q_factor, f_c)
    }
}

/// The bracketed factor of the detected spectrum at one frequency.
pub fn detection_factor(coeffs: &DetectionCoeffs, modes: &[ModeLine], omega: f64) -> f64 {
    let phase = Complex64::from_polar(1.0, coeffs.delta_phi);
    coeffs.c_nv
        + modes
            .iter()
            .map(|m| {
                let l = lorentzian(omega, m.omega_c, m.kappa_hwhm);
                let root = m.f_c.max(0.0).sqrt();
                coeffs.c_cav * m.f_c * l.norm_sqr() + 2.0 * coeffs.c_int * (phase * root * l).re
            })
            .sum::<f64>()
}

/// Looks up the baseline at angular frequency `omega`, converting to
/// wavelength when the baseline is tabulated in nm.
pub(crate) fn baseline_at(baseline: &Spectrum, omega: f64) -> Result<f64> {
    let at = match baseline.x_unit {
        Unit::Nm => wavelength_from_omega(omega),
        _ => omega,
    };
    baseline.interpolate(at).ok_or_else(|| {
        let (lo, hi) = baseline.x_range().unwrap_or((f64::NAN, f64::NAN));
        Error::GridOutsideBaseline { value: at, lo, hi }
    })
}

fn check_modes(modes: &[ModeLine]) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::violation("modes", "at least one mode is required"));
    }
    if modes.iter().any(|m| !(m.kappa_hwhm > 0.0) || m.f_c < 0.0) {
        return Err(Error::violation("modes", "kappa_hwhm must be > 0 and f_c >= 0"));
    }
    Ok(())
}

/// Detected spectrum on an angular-frequency grid (rad/ns, strictly increasing).
pub fn detected_spectrum(
    coeffs: &DetectionCoeffs,
    modes: &[ModeLine],
    nv_baseline: &Spectrum,
    omega_grid: &[f64],
) -> Result<Spectrum> {
    coeffs.validate()?;
    check_modes(modes)?;
    let y = omega_grid
        .iter()
        .map(|&w| Ok(baseline_at(nv_baseline, w)? * detection_factor(coeffs, modes, w)))
        .collect::<Result<Vec<_>>>()?;
    Series::new(omega_grid.to_vec(), y, Unit::RadPerNs, nv_baseline.y_unit)
}

/// Detected spectrum on a wavelength grid (nm, strictly increasing).
pub fn detected_spectrum_nm(
    coeffs: &DetectionCoeffs,
    modes: &[ModeLine],
    nv_baseline: &Spectrum,
    wavelengths: &[f64],
) -> Result<Spectrum> {
    coeffs.validate()?;
    check_modes(modes)?;
    let y = wavelengths
        .iter()
        .map(|&nm| {
            let w = omega_from_wavelength(nm);
            Ok(baseline_at(nv_baseline, w)? * detection_factor(coeffs, modes, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Series::new(wavelengths.to_vec(), y, Unit::Nm, nv_baseline.y_unit)
}

/// A smooth synthetic NV emission profile (weak zero-phonon line at 637 nm
/// plus a phonon sideband peaking near 690 nm), normalized to a unit maximum.
/// Stand-in for a measured bare spectrum.
pub fn nv_sideband(wavelengths: &[f64]) -> Result<Spectrum> {
    let raw: Vec<f64> = wavelengths
        .iter()
        .map(|&l| {
            let g = |c: f64, s: f64| (-0.5 * ((l - c) / s).powi(2)).exp();
            let zpl = 0.08 / (1.0 + ((l - 637.2) / 0.8).powi(2));
            zpl + g(688.0, 28.0) + 0.55 * g(730.0, 32.0) + 0.02
        })
        .collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    Series::new(
        wavelengths.to_vec(),
        raw.into_iter().map(|v| v / max).collect(),
        Unit::Nm,
        Unit::Counts,
    )
}

/// Evenly spaced grid of `n >= 2` points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    let step = (stop - start) / (n.max(2) - 1) as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}
