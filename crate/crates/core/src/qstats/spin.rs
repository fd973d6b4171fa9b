use serde::{Deserialize, Serialize};

use crate::error::{Result, Violation};
use crate::model::{Series, Spectrum, SpinProfile, TimeTrace, Unit, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    /// GHz.
    pub zero_field_split: f64,
    /// Splitting of the m_s = +1 and -1 lines (GHz).
    pub zeeman_split: f64,
    /// Full width at half depth of each dip (GHz).
    pub linewidth: f64,
    /// Depth of a single dip, in [0, 1].
    pub contrast: f64,
    /// Rabi frequency (rad/ns).
    pub rabi_freq: f64,
    /// Decoherence time of the Rabi envelope (ns); `None` for undamped flopping.
    #[serde(default)]
    pub t2_star: Option<f64>,
}

impl Default for SpinParams {
    fn default() -> Self {
        Self {
            zero_field_split: 2.87,
            zeeman_split: 0.0,
            linewidth: 0.01,
            contrast: 0.3,
            rabi_freq: 2.0 * std::f64::consts::PI * 0.01,
            t2_star: None,
        }
    }
}

impl SpinParams {
    /// Takes `D` and contrast from `profile`; the Zeeman splitting is
    /// `2 gamma B` for a field `B` (tesla) along the NV axis.
    pub fn from_profile(profile: &SpinProfile, field_tesla: f64, linewidth: f64, rabi_freq: f64) -> Self {
        Self {
            zero_field_split: profile.zero_field_split,
            zeeman_split: 2.0 * profile.gyromagnetic_ratio * field_tesla.abs(),
            linewidth,
            contrast: profile.contrast,
            rabi_freq,
            t2_star: None,
        }
    }

    fn dip(&self, nu: f64, center: f64) -> f64 {
        let u = (nu - center) / (0.5 * self.linewidth);
        1.0 / (1.0 + u * u)
    }
}

impl Validate for SpinParams {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if !(self.zero_field_split > 0.0) {
            v.push(Violation::new("zero_field_split", "must be > 0"));
        }
        if !(self.zeeman_split >= 0.0) {
            v.push(Violation::new("zeeman_split", "must be >= 0"));
        }
        if !(self.linewidth > 0.0) {
            v.push(Violation::new("linewidth", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            v.push(Violation::new("contrast", "must lie in [0, 1]"));
        }
        if !(self.rabi_freq > 0.0) {
            v.push(Violation::new("rabi_freq", "must be > 0"));
        }
        if let Some(t) = self.t2_star {
            if !(t > 0.0) {
                v.push(Violation::new("t2_star", "must be > 0"));
            }
        }
        v
    }
}

/// Relative fluorescence under microwave driving at frequencies `nu_grid` (GHz).
pub fn esr_spectrum(spin: &SpinParams, nu_grid: &[f64]) -> Result<Spectrum> {
    spin.validate()?;
    let half = 0.5 * spin.zeeman_split;
    let (lo, hi) = (spin.zero_field_split - half, spin.zero_field_split + half);
    let y = nu_grid
        .iter()
        .map(|&nu| 1.0 - spin.contrast * (spin.dip(nu, lo) + spin.dip(nu, hi)))
        .collect();
    Series::new(nu_grid.to_vec(), y, Unit::Ghz, Unit::Normalized)
}

/// Relative fluorescence after a resonant microwave pulse of each duration (ns).
pub fn rabi_trace(spin: &SpinParams, durations: &[f64]) -> Result<TimeTrace> {
    spin.validate()?;
    let w = spin.rabi_freq;
    let y = durations
        .iter()
        .map(|&t| match spin.t2_star {
            None => 1.0 - spin.contrast * (0.5 * w * t).sin().powi(2),
            Some(t2) => 1.0 - spin.contrast * 0.5 * (1.0 - (-t / t2).exp() * (w * t).cos()),
        })
        .collect();
    Series::new(durations.to_vec(), y, Unit::Ns, Unit::Normalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectro::linspace;
    use std::f64::consts::PI;

    fn argmin(s: &Series, lo: f64, hi: f64) -> f64 {
        s.x.iter()
            .zip(&s.y)
            .filter(|(x, _)| (lo..=hi).contains(*x))
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(x, _)| *x)
            .unwrap()
    }

    #[test]
    fn zero_field_dip_at_the_splitting() {
        let s = esr_spectrum(&SpinParams::default(), &linspace(2.7, 3.0, 301)).unwrap();
        assert!((argmin(&s, 2.7, 3.0) - 2.87).abs() < 1e-12);
        assert!((s.y.iter().copied().fold(1.0, f64::min) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zeeman_dips_are_symmetric() {
        let spin = SpinParams {
            zeeman_split: 0.1,
            ..Default::default()
        };
        let s = esr_spectrum(&spin, &linspace(2.7, 3.04, 341)).unwrap();
        assert!((argmin(&s, 2.7, 2.87) - 2.82).abs() < 1e-9);
        assert!((argmin(&s, 2.87, 3.04) - 2.92).abs() < 1e-9);
        assert!(s.y.iter().all(|&v| (1.0 - 2.0 * spin.contrast..=1.0).contains(&v)));
        let flat = esr_spectrum(&SpinParams { contrast: 0.0, ..spin }, &[2.8, 2.9]).unwrap();
        assert_eq!(flat.y, [1.0, 1.0]);
    }

    #[test]
    fn rabi_landmarks() {
        let spin = SpinParams::default();
        let w = spin.rabi_freq;
        let r = rabi_trace(&spin, &[0.0, PI / w, 2.0 * PI / w]).unwrap();
        assert_eq!(r.y[0], 1.0);
        assert!((r.y[1] - 0.7).abs() < 1e-12);
        assert!((r.y[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn damped_extrema_decay() {
        let spin = SpinParams {
            t2_star: Some(200.0),
            ..Default::default()
        };
        let w = spin.rabi_freq;
        let minima: Vec<f64> = (0..5).map(|k| (2 * k + 1) as f64 * PI / w).collect();
        let r = rabi_trace(&spin, &minima).unwrap();
        assert!(r.y.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn field_sets_the_splitting() {
        let s = SpinParams::from_profile(&SpinProfile::default(), 0.001, 0.01, 0.1);
        assert!((s.zeeman_split - 0.056).abs() < 1e-15);
    }
}
