//! Shared domain types, unit conventions and validation.
//!
//! Rates are angular (rad/ns), wavelengths in nm, times in ns. Every type
//! implements [`Validate`], which reports all violated invariants at once.

mod series;
mod units;

pub use series::{Series, Spectrum, TimeTrace};
pub use units::{omega_from_wavelength, wavelength_from_omega, Unit, SPEED_OF_LIGHT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

pub trait Validate {
    fn violations(&self) -> Vec<Violation>;

    fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    fn validated(self) -> Result<Self>
    where
        Self: Sized,
    {
        self.validate()?;
        Ok(self)
    }
}

fn check(v: &mut Vec<Violation>, ok: bool, field: &str, rule: &str) {
    if !ok {
        v.push(Violation::new(field, rule));
    }
}

/// A photonic-crystal cavity resonance with a parametric spatial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// Resonance wavelength (nm).
    pub lambda_c: f64,
    pub q_factor: f64,
    /// Lattice period (nm).
    pub lattice_a: f64,
    /// Gaussian 1/e^2 intensity half-widths in the slab plane (nm).
    pub envelope_wx: f64,
    pub envelope_wy: f64,
    /// 1/e intensity decay length away from the slab (nm).
    pub z_decay: f64,
    /// In-plane polarization axis (rad from x).
    pub polarization_angle: f64,
    /// In units of (lambda/n)^3. Metadata only.
    #[serde(default)]
    pub mode_volume: Option<f64>,
    pub n_slab: f64,
}

impl CavityMode {
    /// A mode with the default L3 geometry: a = 176 nm, w_x = 2a, w_y = a,
    /// z_decay = 100 nm, x polarization, GaP slab.
    pub fn new(lambda_c: f64, q_factor: f64) -> Self {
        let a = 176.0;
        Self {
            lambda_c,
            q_factor,
            lattice_a: a,
            envelope_wx: 2.0 * a,
            envelope_wy: a,
            z_decay: 100.0,
            polarization_angle: 0.0,
            mode_volume: Some(0.74),
            n_slab: 3.4,
        }
    }

    pub fn omega_c(&self) -> f64 {
        omega_from_wavelength(self.lambda_c)
    }

    /// Energy (population) decay rate omega_c / Q, the Lindblad convention.
    pub fn kappa_energy(&self) -> f64 {
        self.omega_c() / self.q_factor
    }

    /// Half width at half maximum omega_c / (2Q), used by the Lorentzian line shape.
    pub fn kappa_hwhm(&self) -> f64 {
        0.5 * self.kappa_energy()
    }

    /// Full width at half maximum in wavelength, lambda_c / Q.
    pub fn fwhm_nm(&self) -> f64 {
        self.lambda_c / self.q_factor
    }
}

/// Cavity linewidth omega_c / (2Q) in rad/ns (half width).
pub fn kappa_of(mode: &CavityMode) -> f64 {
    mode.kappa_hwhm()
}

impl Validate for CavityMode {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        check(&mut v, self.lambda_c > 0.0, "lambda_c", "must be > 0");
        check(&mut v, self.q_factor > 0.0, "q_factor", "must be > 0");
        check(&mut v, self.lattice_a > 0.0, "lattice_a", "must be > 0");
        check(&mut v, self.envelope_wx > 0.0, "envelope_wx", "must be > 0");
        check(&mut v, self.envelope_wy > 0.0, "envelope_wy", "must be > 0");
        check(&mut v, self.z_decay > 0.0, "z_decay", "must be > 0");
        check(&mut v, self.n_slab > 0.0, "n_slab", "must be > 0");
        check(
            &mut v,
            self.polarization_angle.is_finite(),
            "polarization_angle",
            "must be finite",
        );
        if let Some(vm) = self.mode_volume {
            check(&mut v, vm > 0.0, "mode_volume", "must be > 0");
        }
        if v.is_empty() {
            let k = self.kappa_energy();
            check(&mut v, k > 0.0 && k.is_finite(), "q_factor", "linewidth must be > 0");
        }
        v
    }
}

/// NV ground-state spin constants carried by an emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinProfile {
    /// GHz.
    pub zero_field_split: f64,
    /// GHz/T.
    pub gyromagnetic_ratio: f64,
    pub contrast: f64,
}

impl Default for SpinProfile {
    fn default() -> Self {
        Self {
            zero_field_split: 2.87,
            gyromagnetic_ratio: 28.0,
            contrast: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    /// Bare emission spectrum I_0(lambda), x in nm.
    pub bare_spectrum: Spectrum,
    /// Bare lifetime (ns).
    pub tau0: f64,
    /// (x, y, z) in the cavity frame (nm).
    pub position: [f64; 3],
    /// In-plane dipole angle (rad from x).
    pub dipole_angle: f64,
    #[serde(default)]
    pub spin: SpinProfile,
}

impl Validate for Emitter {
    fn violations(&self) -> Vec<Violation> {
        let mut v: Vec<Violation> = self
            .bare_spectrum
            .violations()
            .into_iter()
            .map(|x| Violation::new(format!("bare_spectrum.{}", x.field), x.rule))
            .collect();
        check(&mut v, self.tau0 > 0.0, "tau0", "must be > 0");
        check(
            &mut v,
            self.position.iter().all(|c| c.is_finite()),
            "position",
            "must be finite",
        );
        check(
            &mut v,
            self.spin.zero_field_split > 0.0,
            "spin.zero_field_split",
            "must be > 0",
        );
        check(
            &mut v,
            self.spin.contrast > 0.0 && self.spin.contrast <= 1.0,
            "spin.contrast",
            "must lie in (0, 1]",
        );
        v
    }
}

/// Rates of the emitter-cavity master equation, all in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledSystemParams {
    /// Cavity minus emitter angular frequency.
    pub detuning: f64,
    pub g: f64,
    /// Cavity energy decay rate.
    pub kappa: f64,
    /// Emitter population decay rate.
    pub gamma: f64,
    /// Pure dephasing rate.
    pub gamma_d: f64,
}

impl Validate for CoupledSystemParams {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        check(&mut v, self.detuning.is_finite(), "detuning", "must be finite");
        check(&mut v, self.g >= 0.0 && self.g.is_finite(), "g", "must be >= 0");
        check(&mut v, self.kappa >= 0.0 && self.kappa.is_finite(), "kappa", "must be >= 0");
        check(&mut v, self.gamma >= 0.0 && self.gamma.is_finite(), "gamma", "must be >= 0");
        check(
            &mut v,
            self.gamma_d >= 0.0 && self.gamma_d.is_finite(),
            "gamma_d",
            "must be >= 0",
        );
        v
    }
}

/// Collection-geometry coefficients of the detected spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCoeffs {
    pub c_nv: f64,
    pub c_cav: f64,
    pub c_int: f64,
    pub delta_phi: f64,
}

impl DetectionCoeffs {
    /// Multi-mode fiber collection: no interference term.
    pub fn incoherent(c_nv: f64, c_cav: f64) -> Self {
        Self {
            c_nv,
            c_cav,
            c_int: 0.0,
            delta_phi: 0.0,
        }
    }
}

impl Validate for DetectionCoeffs {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        check(&mut v, self.c_nv >= 0.0, "c_nv", "must be >= 0");
        check(&mut v, self.c_cav >= 0.0, "c_cav", "must be >= 0");
        check(&mut v, self.delta_phi.is_finite(), "delta_phi", "must be finite");
        if self.c_nv >= 0.0 && self.c_cav >= 0.0 {
            let bound = (self.c_nv * self.c_cav).sqrt();
            // small slack so fitted values sitting on the bound still validate
            check(
                &mut v,
                self.c_int.abs() <= bound * (1.0 + 1e-12),
                "c_int",
                "|c_int| must not exceed sqrt(c_nv * c_cav)",
            );
        }
        v
    }
}

/// Pumping, collection and decay channels of an emitter at one position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionBudget {
    pub pump_rate: f64,
    /// Collection efficiency per radiative channel, in [0, 1].
    pub collection_eff: Vec<f64>,
    pub proportionality: f64,
    /// Radiative rate per channel (rad/ns).
    pub channel_rates: Vec<f64>,
    pub nonradiative_rate: f64,
}

impl EmissionBudget {
    /// Total excited-state decay rate.
    pub fn total_rate(&self) -> f64 {
        self.channel_rates.iter().sum::<f64>() + self.nonradiative_rate
    }
}

impl Validate for EmissionBudget {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        check(
            &mut v,
            self.collection_eff.len() == self.channel_rates.len(),
            "collection_eff",
            "one entry per channel",
        );
        check(
            &mut v,
            self.collection_eff.iter().all(|e| (0.0..=1.0).contains(e)),
            "collection_eff",
            "must lie in [0, 1]",
        );
        check(
            &mut v,
            self.channel_rates.iter().all(|&r| r >= 0.0),
            "channel_rates",
            "must be >= 0",
        );
        check(&mut v, self.nonradiative_rate >= 0.0, "nonradiative_rate", "must be >= 0");
        check(&mut v, self.pump_rate >= 0.0, "pump_rate", "must be >= 0");
        check(&mut v, self.total_rate() > 0.0, "channel_rates", "total decay rate must be > 0");
        v
    }
}
