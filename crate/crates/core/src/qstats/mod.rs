//! Photon statistics of a three-level emitter with a metastable shelf, and
//! NV ground-state spin readout.
//!
//! States are ordered `[ground, excited, shelf]`. Photons are emitted on the
//! excited-to-ground decay. The default shelving rates are a plausibility
//! profile, not measured values.

mod hbt;
mod spin;

pub use hbt::{hbt_histogram, HbtHistogram, HbtOptions};
pub use spin::{esr_spectrum, rabi_trace, SpinParams};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::model::{Series, TimeTrace, Unit, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeLevelRates {
    /// Optical pump, 1/ns.
    pub pump: f64,
    /// Radiative decay `1 / tau`, 1/ns.
    pub decay: f64,
    /// Excited state to shelf, 1/ns.
    pub shelving: f64,
    /// Shelf to ground, 1/ns.
    pub deshelving: f64,
}

impl ThreeLevelRates {
    pub const DEFAULT_SHELVING: f64 = 0.02;
    pub const DEFAULT_DESHELVING: f64 = 0.003;
    pub const DEFAULT_LIFETIME: f64 = 16.4;

    /// The default shelving profile at the given pump rate.
    pub fn with_pump(pump: f64) -> Self {
        Self {
            pump,
            decay: 1.0 / Self::DEFAULT_LIFETIME,
            shelving: Self::DEFAULT_SHELVING,
            deshelving: Self::DEFAULT_DESHELVING,
        }
    }

    /// Generator `M` of `dp/dt = M p`.
    pub fn rate_matrix(&self) -> Matrix3<f64> {
        let (kp, kd, ks, kr) = (self.pump, self.decay, self.shelving, self.deshelving);
        Matrix3::new(
            -kp, kd, kr, //
            kp, -(kd + ks), 0.0, //
            0.0, ks, -kr,
        )
    }

    /// Steady-state populations.
    pub fn steady_state(&self) -> Result<Vector3<f64>> {
        self.validate()?;
        let (kp, kd, ks, kr) = (self.pump, self.decay, self.shelving, self.deshelving);
        let e = kp / (kd + ks);
        let s = if ks == 0.0 {
            0.0
        } else if kr > 0.0 {
            ks * e / kr
        } else {
            return Err(Error::SingularRateMatrix);
        };
        let p = Vector3::new(1.0, e, s) / (1.0 + e + s);
        if !(p[1] > 0.0) {
            return Err(Error::SingularRateMatrix);
        }
        Ok(p)
    }

    /// Populations at `t` after a detection (everything in the ground state).
    pub fn populations_after_emission(&self, t: f64) -> Vector3<f64> {
        (self.rate_matrix() * t.abs()).exp() * Vector3::new(1.0, 0.0, 0.0)
    }

    /// Mean photon emission rate in the steady state, 1/ns.
    pub fn emission_rate(&self) -> Result<f64> {
        Ok(self.decay * self.steady_state()?[1])
    }

    /// Slowest nonzero relaxation rate, which sets how fast `g2` settles.
    pub fn slowest_rate(&self) -> f64 {
        [self.pump, self.decay, self.shelving, self.deshelving]
            .into_iter()
            .filter(|&r| r > 0.0)
            .fold(f64::INFINITY, f64::min)
    }
}

impl Default for ThreeLevelRates {
    fn default() -> Self {
        Self::with_pump(0.05)
    }
}

impl Validate for ThreeLevelRates {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        for (name, r) in [
            ("pump", self.pump),
            ("shelving", self.shelving),
            ("deshelving", self.deshelving),
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                v.push(Violation::new(name, "must be finite and >= 0"));
            }
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            v.push(Violation::new("decay", "must be finite and > 0"));
        }
        v
    }
}

/// Intensity correlation `g2(tau) = p_e(|tau|) / p_e(inf)` after a
/// detection, on an arbitrary (possibly two-sided) delay grid.
pub fn g2_rate_model(rates: &ThreeLevelRates, tau_grid: &[f64]) -> Result<TimeTrace> {
    let pe_inf = rates.steady_state()?[1];
    let y = tau_grid
        .iter()
        .map(|&t| rates.populations_after_emission(t)[1] / pe_inf)
        .collect();
    Series::new(tau_grid.to_vec(), y, Unit::Ns, Unit::Normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectro::linspace;

    #[test]
    fn antibunching_and_normalization() {
        let r = ThreeLevelRates::default();
        let far = 40.0 / r.slowest_rate();
        let g = g2_rate_model(&r, &[0.0, far]).unwrap();
        assert_eq!(g.y[0], 0.0);
        assert!((g.y[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shelving_produces_a_bunching_shoulder() {
        let r = ThreeLevelRates::default();
        let g = g2_rate_model(&r, &linspace(0.0, 300.0, 601)).unwrap();
        assert!(g.max_y() > 1.0);
        let plain = ThreeLevelRates {
            shelving: 0.0,
            ..r
        };
        let g = g2_rate_model(&plain, &linspace(0.0, 300.0, 601)).unwrap();
        assert!(g.max_y() < 1.0 + 1e-9);
    }

    #[test]
    fn symmetric_and_conserving() {
        let r = ThreeLevelRates::with_pump(0.2);
        let g = g2_rate_model(&r, &[-37.5, 37.5]).unwrap();
        assert_eq!(g.y[0], g.y[1]);
        for t in [0.0, 0.5, 3.0, 40.0, 900.0] {
            let p = r.populations_after_emission(t);
            assert!((p.sum() - 1.0).abs() < 1e-10);
            assert!(p.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        }
    }

    #[test]
    fn zero_pump_is_singular() {
        let r = ThreeLevelRates::with_pump(0.0);
        assert!(matches!(g2_rate_model(&r, &[0.0]), Err(Error::SingularRateMatrix)));
        let trap = ThreeLevelRates {
            deshelving: 0.0,
            ..ThreeLevelRates::default()
        };
        assert!(matches!(trap.steady_state(), Err(Error::SingularRateMatrix)));
    }

    #[test]
    fn steady_state_is_stationary() {
        let r = ThreeLevelRates::with_pump(0.07);
        let p = r.steady_state().unwrap();
        assert!((r.rate_matrix() * p).amax() < 1e-15);
    }
}
