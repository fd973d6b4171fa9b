//! Parametric cavity field, position-dependent coupling, scan simulation,
//! track fitting and the scan imaging model.
//!
//! The field is a model, not a solution of Maxwell's equations:
//!
//! ```text
//! I(x, y, z) = cos^2(pi x / a) exp(-2 x^2 / w_x^2) exp(-2 y^2 / w_y^2) exp(-z / z_decay)
//! f_c(r, theta) = f_c_max I(r) cos^2(theta - polarization_angle)
//! ```
//!
//! normalized to 1 at the on-surface antinode. An optional node fill length
//! `L` replaces `cos^2(pi x / a)` by `1 - exp(-z / L) sin^2(pi x / a)`, so the
//! standing-wave contrast washes out away from the slab. A tabulated surface
//! map may stand in for the in-plane factors.

mod imaging;
mod track;

pub use imaging::{
    convolve_field, convolve_sample, deconvolve, deconvolve_field, Deconvolution, Field2D,
};
pub use track::{
    fit_track, simulate_scan, ScanNoise, ScanResult, ScanTrack, StepMeta, TrackFit, TrackFitOptions,
    TrackGeometry,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::model::{CavityMode, Validate};

/// A gridded in-plane intensity on the slab surface, centered on the cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMap {
    pub field: Field2D,
    /// Position of sample (0, 0) in the cavity frame (nm).
    pub x0: f64,
    pub y0: f64,
}

impl SurfaceMap {
    /// Bilinear interpolation, normalized to the map maximum; 0 outside.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let f = &self.field;
        let max = f.values.iter().copied().fold(0.0, f64::max);
        if !(max > 0.0) {
            return 0.0;
        }
        let u = (x - self.x0) / f.dx;
        let v = (y - self.y0) / f.dy;
        if u < 0.0 || v < 0.0 || u > (f.nx - 1) as f64 || v > (f.ny - 1) as f64 {
            return 0.0;
        }
        let (i, j) = ((u.floor() as usize).min(f.nx.saturating_sub(2)), (v.floor() as usize).min(f.ny.saturating_sub(2)));
        let (s, t) = (u - i as f64, v - j as f64);
        let g = |ix: usize, iy: usize| f.get(ix.min(f.nx - 1), iy.min(f.ny - 1));
        let val = (1.0 - s) * (1.0 - t) * g(i, j)
            + s * (1.0 - t) * g(i + 1, j)
            + (1.0 - s) * t * g(i, j + 1)
            + s * t * g(i + 1, j + 1);
        val / max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub mode: CavityMode,
    /// Enhancement at the on-surface antinode for an aligned dipole.
    pub f_c_max: f64,
    /// Decay length (nm) of the standing-wave contrast; `None` keeps full
    /// contrast at every height.
    #[serde(default)]
    pub node_fill_length: Option<f64>,
    #[serde(default)]
    pub surface_map: Option<SurfaceMap>,
}

impl FieldModel {
    pub fn new(mode: CavityMode, f_c_max: f64) -> Self {
        Self {
            mode,
            f_c_max,
            node_fill_length: None,
            surface_map: None,
        }
    }

    /// Chooses `f_c_max` so that the largest `f_c` along x, at height `z`,
    /// lateral offset `y` and dipole angle `theta`, equals `peak`.
    pub fn calibrated(mut self, peak: f64, z: f64, y: f64, theta: f64) -> Result<Self> {
        self.f_c_max = 1.0;
        let unit = self.peak_along_x(y, z, theta);
        if !(unit > 0.0) {
            return Err(Error::violation("f_c_max", "calibration point has zero coupling"));
        }
        self.f_c_max = peak / unit;
        self.validated()
    }

    /// Maximum of `f_c` over x at fixed (y, z).
    pub fn peak_along_x(&self, y: f64, z: f64, theta: f64) -> f64 {
        if self.surface_map.is_none() {
            // every x-dependent factor peaks at x = 0
            return fc_at(self, [0.0, y, z], theta);
        }
        let a = self.mode.lattice_a;
        let reach = 3.0 * self.mode.envelope_wx.max(a);
        (0..=4000)
            .map(|i| fc_at(self, [-reach + 2.0 * reach * i as f64 / 4000.0, y, z], theta))
            .fold(0.0, f64::max)
    }
}

impl Validate for FieldModel {
    fn violations(&self) -> Vec<Violation> {
        let mut v: Vec<Violation> = self
            .mode
            .violations()
            .into_iter()
            .map(|x| Violation::new(format!("mode.{}", x.field), x.rule))
            .collect();
        if !(self.f_c_max >= 0.0 && self.f_c_max.is_finite()) {
            v.push(Violation::new("f_c_max", "must be finite and >= 0"));
        }
        if let Some(l) = self.node_fill_length {
            if !(l > 0.0) {
                v.push(Violation::new("node_fill_length", "must be > 0"));
            }
        }
        if let Some(m) = &self.surface_map {
            if m.field.values.iter().any(|&x| !(x >= 0.0)) {
                v.push(Violation::new("surface_map", "intensities must be >= 0"));
            }
        }
        v
    }
}

/// Normalized mode intensity at `r = (x, y, z)` nm relative to the cavity
/// center; `z` is the height above the slab surface.
pub fn mode_intensity(field: &FieldModel, r: [f64; 3]) -> f64 {
    let [x, y, z] = r;
    let m = &field.mode;
    let vertical = (-z / m.z_decay).exp();
    if let Some(map) = &field.surface_map {
        return map.at(x, y) * vertical;
    }
    let s = (std::f64::consts::PI * x / m.lattice_a).sin();
    let contrast = field.node_fill_length.map_or(1.0, |l| (-z.max(0.0) / l).exp());
    let standing = 1.0 - contrast * s * s;
    let envelope = (-2.0 * (x / m.envelope_wx).powi(2) - 2.0 * (y / m.envelope_wy).powi(2)).exp();
    standing * envelope * vertical
}

/// Position- and orientation-dependent enhancement `f_c`.
pub fn fc_at(field: &FieldModel, r: [f64; 3], dipole_angle: f64) -> f64 {
    let p = (dipole_angle - field.mode.polarization_angle).cos();
    field.f_c_max * mode_intensity(field, r) * p * p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field() -> FieldModel {
        FieldModel::new(CavityMode::new(667.3, 550.0), 1.0)
    }

    #[test]
    fn antinode_and_decay() {
        let f = field();
        assert_eq!(mode_intensity(&f, [0.0, 0.0, 0.0]), 1.0);
        let a = mode_intensity(&f, [10.0, 5.0, 0.0]);
        let b = mode_intensity(&f, [10.0, 5.0, 100.0]);
        assert!((b / a - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn standing_wave_repeats() {
        let f = field();
        let a = f.mode.lattice_a;
        let env = |x: f64| (-2.0 * (x / f.mode.envelope_wx).powi(2)).exp();
        let x = 12.0;
        let r1 = mode_intensity(&f, [x, 0.0, 0.0]) / env(x);
        let r2 = mode_intensity(&f, [x + a, 0.0, 0.0]) / env(x + a);
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn projection_and_calibration() {
        let mut f = field();
        f.f_c_max = 4.0;
        assert!(fc_at(&f, [0.0; 3], std::f64::consts::FRAC_PI_2).abs() < 1e-30);
        assert_eq!(fc_at(&f, [0.0; 3], 0.0), 4.0);
        let theta = 20f64.to_radians();
        let c = field().calibrated(0.7, 98.0, 70.0, theta).unwrap();
        let peak = (-400..=400)
            .map(|i| fc_at(&c, [i as f64, 70.0, 98.0], theta))
            .fold(0.0, f64::max);
        assert!((peak - 0.7).abs() < 1e-12);
    }

    #[test]
    fn node_fill_lifts_the_nodes_off_the_surface() {
        let mut f = field();
        f.node_fill_length = Some(150.0);
        let a = f.mode.lattice_a;
        assert!(mode_intensity(&f, [a / 2.0, 0.0, 0.0]) < 1e-30);
        assert!(mode_intensity(&f, [a / 2.0, 0.0, 98.0]) > 0.1);
        assert_eq!(mode_intensity(&f, [0.0; 3]), 1.0);
    }

    #[test]
    fn surface_map_replaces_the_envelope() {
        let mut map = Field2D::zeros(3, 3, 10.0, 10.0);
        map.set(1, 1, 4.0);
        map.set(2, 1, 2.0);
        let mut f = field();
        f.surface_map = Some(SurfaceMap {
            field: map,
            x0: -10.0,
            y0: -10.0,
        });
        assert_eq!(mode_intensity(&f, [0.0; 3]), 1.0);
        assert!((mode_intensity(&f, [5.0, 0.0, 0.0]) - 0.75).abs() < 1e-12);
        assert_eq!(mode_intensity(&f, [50.0, 0.0, 0.0]), 0.0);
    }

    proptest! {
        #[test]
        fn intensity_is_bounded(x in -2000.0..2000.0f64, y in -1000.0..1000.0f64, z in 0.0..500.0f64, fill in prop::option::of(1.0..500.0f64)) {
            let mut f = field();
            f.node_fill_length = fill;
            let i = mode_intensity(&f, [x, y, z]);
            prop_assert!((0.0..=1.0).contains(&i));
        }

        #[test]
        fn dipole_flip_is_invisible(x in -500.0..500.0f64, th in -3.0..3.0f64) {
            let f = field();
            let a = fc_at(&f, [x, 20.0, 30.0], th);
            let b = fc_at(&f, [x, 20.0, 30.0], th + std::f64::consts::PI);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn surface_maximum_is_one() {
        let f = field();
        let mut max: f64 = 0.0;
        for i in -500..=500 {
            for j in -100..=100 {
                max = max.max(mode_intensity(&f, [i as f64 * 0.7, j as f64 * 2.0, 0.0]));
            }
        }
        assert!((max - 1.0).abs() < 1e-9);
    }
}
