use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fc_at, FieldModel};
use crate::error::{Error, Result, Violation};
use crate::lsq::{self, LeastSquaresProblem, LmOptions};
use crate::model::{DetectionCoeffs, Emitter, Series, Spectrum, Unit, Validate};
use crate::spectro::{detected_spectrum, ModeLine, SpectrumFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMeta {
    pub index: usize,
    /// Commanded in-plane step length (nm); 0 for the first point.
    pub commanded_step: f64,
}

/// Ordered cavity positions (nm) in the sample frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTrack {
    pub positions: Vec<[f64; 3]>,
    pub steps: Vec<StepMeta>,
}

impl ScanTrack {
    pub fn from_positions(positions: Vec<[f64; 3]>) -> Result<Self> {
        let steps = positions
            .iter()
            .enumerate()
            .map(|(index, p)| StepMeta {
                index,
                commanded_step: if index == 0 {
                    0.0
                } else {
                    let q = positions[index - 1];
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
                },
            })
            .collect();
        Self { positions, steps }.validated()
    }

    /// `n` equally spaced points starting at `start`.
    pub fn line(start: [f64; 3], step: [f64; 3], n: usize) -> Result<Self> {
        Self::from_positions(
            (0..n)
                .map(|i| {
                    let k = i as f64;
                    [start[0] + k * step[0], start[1] + k * step[1], start[2] + k * step[2]]
                })
                .collect(),
        )
    }

    /// Successive x-lines of `nx` points, one per entry of `ys`.
    pub fn raster(x_start: f64, dx: f64, nx: usize, ys: &[f64], z: f64) -> Result<Self> {
        Self::from_positions(
            ys.iter()
                .flat_map(|&y| (0..nx).map(move |i| [x_start + i as f64 * dx, y, z]))
                .collect(),
        )
    }

    /// Adds cumulative in-plane Gaussian jitter of width `sigma` per step.
    pub fn with_slip(mut self, sigma: f64, seed: u64) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(self);
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|_| Error::violation("slip_sigma", "must be finite and >= 0"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut dx, mut dy) = (0.0, 0.0);
        for p in self.positions.iter_mut().skip(1) {
            dx += normal.sample(&mut rng);
            dy += normal.sample(&mut rng);
            p[0] += dx;
            p[1] += dy;
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn shifted(&self, by: [f64; 3]) -> Self {
        let mut t = self.clone();
        for p in &mut t.positions {
            for k in 0..3 {
                p[k] += by[k];
            }
        }
        t
    }
}

impl Validate for ScanTrack {
    fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.positions.len() < 2 {
            v.push(Violation::new("positions", "at least 2 points are required"));
        }
        if self.positions.iter().flatten().any(|c| !c.is_finite()) {
            v.push(Violation::new("positions", "coordinates must be finite"));
        }
        if self.steps.len() != self.positions.len() {
            v.push(Violation::new("steps", "one entry per position"));
        }
        v
    }
}

/// Per-position Poisson counting noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanNoise {
    /// Expected counts at the maximum of the bare spectrum for C_nv = 1.
    pub peak_counts: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub track: ScanTrack,
    pub emitter_position: [f64; 3],
    pub dipole_angle: f64,
    /// `fc[i][m]`: enhancement of mode `m` at position `i`.
    pub fc: Vec<Vec<f64>>,
    /// Raw spectra, one per position (may be empty).
    #[serde(default)]
    pub spectra: Vec<Spectrum>,
    /// Spectral fits, one per position (may be empty).
    #[serde(default)]
    pub fits: Vec<SpectrumFit>,
}

impl ScanResult {
    /// A result carrying only an f_c series for a single mode.
    pub fn from_fc(track: ScanTrack, fc: Vec<f64>) -> Result<Self> {
        Self {
            track,
            emitter_position: [0.0; 3],
            dipole_angle: 0.0,
            fc: fc.into_iter().map(|v| vec![v]).collect(),
            spectra: Vec::new(),
            fits: Vec::new(),
        }
        .validated()
    }

    pub fn fc_series(&self, mode: usize) -> Vec<f64> {
        self.fc.iter().map(|v| v.get(mode).copied().unwrap_or(f64::NAN)).collect()
    }

    /// Maximum of each raw spectrum.
    pub fn peak_series(&self) -> Vec<f64> {
        self.spectra.iter().map(Series::max_y).collect()
    }
}

impl Validate for ScanResult {
    fn violations(&self) -> Vec<Violation> {
        let n = self.track.len();
        let mut v = self.track.violations();
        if self.fc.len() != n {
            v.push(Violation::new("fc", "one entry per track position"));
        }
        if !self.spectra.is_empty() && self.spectra.len() != n {
            v.push(Violation::new("spectra", "one entry per track position"));
        }
        if !self.fits.is_empty() && self.fits.len() != n {
            v.push(Violation::new("fits", "one entry per track position"));
        }
        v
    }
}

/// Detected spectra along a track. The cavity sits at each track position;
/// the emitter-to-cavity vector is `emitter.position - position`.
///
/// Output is independent of thread count: every position uses its own
/// random stream derived from the seed and its index.
pub fn simulate_scan(
    fields: &[FieldModel],
    emitter: &Emitter,
    coeffs: &DetectionCoeffs,
    track: &ScanTrack,
    omega_grid: &[f64],
    noise: Option<ScanNoise>,
) -> Result<ScanResult> {
    if fields.is_empty() {
        return Err(Error::violation("fields", "at least one cavity mode is required"));
    }
    for f in fields {
        f.validate()?;
    }
    emitter.validate()?;
    coeffs.validate()?;
    track.validate()?;
    if let Some(n) = noise {
        if !(n.peak_counts > 0.0) {
            return Err(Error::violation("peak_counts", "must be > 0"));
        }
    }
    let scale = noise.map(|n| n.peak_counts / emitter.bare_spectrum.max_y());
    let per_position = track
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let rel = [
                emitter.position[0] - p[0],
                emitter.position[1] - p[1],
                emitter.position[2] - p[2],
            ];
            let fc: Vec<f64> = fields.iter().map(|f| fc_at(f, rel, emitter.dipole_angle)).collect();
            let lines: Vec<ModeLine> = fields
                .iter()
                .zip(&fc)
                .map(|(f, &v)| ModeLine::from_mode(&f.mode, v))
                .collect();
            let mut s = detected_spectrum(coeffs, &lines, &emitter.bare_spectrum, omega_grid)?;
            if let (Some(n), Some(k)) = (noise, scale) {
                let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
                rng.set_stream(i as u64);
                for y in &mut s.y {
                    let mean = *y * k;
                    *y = if mean > 0.0 {
                        Poisson::new(mean).map(|d| d.sample(&mut rng)).unwrap_or(mean)
                    } else {
                        0.0
                    };
                }
                s.y_unit = Unit::Counts;
            }
            Ok((fc, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let (fc, spectra) = per_position.into_iter().unzip();
    Ok(ScanResult {
        track: track.clone(),
        emitter_position: emitter.position,
        dipole_angle: emitter.dipole_angle,
        fc,
        spectra,
        fits: Vec::new(),
    })
}

/// Emitter placement relative to the track frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackGeometry {
    /// Height above the slab (nm).
    pub z: f64,
    /// Lateral offset (nm).
    pub y: f64,
    /// In-plane dipole angle (rad).
    pub theta: f64,
    /// Position along x (nm).
    pub x_offset: f64,
    pub f_c_max: f64,
}

const GEOMETRY_NAMES: [&str; 5] = ["z", "y", "theta", "x_offset", "f_c_max"];

impl TrackGeometry {
    fn to_array(self) -> [f64; 5] {
        [self.z, self.y, self.theta, self.x_offset, self.f_c_max]
    }

    fn from_array(a: [f64; 5]) -> Self {
        Self {
            z: a[0],
            y: a[1],
            theta: a[2],
            x_offset: a[3],
            f_c_max: a[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFitOptions {
    /// Subset of `z`, `y`, `theta`, `x_offset`, `f_c_max`.
    pub free: BTreeSet<String>,
    /// Which mode's f_c series to fit.
    pub mode: usize,
    pub max_iterations: usize,
}

impl Default for TrackFitOptions {
    /// `f_c_max` is held fixed: it only rescales `cos^2(theta)`.
    fn default() -> Self {
        Self {
            free: ["z", "y", "theta", "x_offset"].map(String::from).into(),
            mode: 0,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFit {
    pub geometry: TrackGeometry,
    pub free_parameters: Vec<String>,
    pub stderr: BTreeMap<String, f64>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
}

struct TrackProblem<'a> {
    field: FieldModel,
    positions: &'a [[f64; 3]],
    data: Vec<f64>,
    base: [f64; 5],
    free: Vec<usize>,
}

impl TrackProblem<'_> {
    fn expand(&self, p: &[f64]) -> [f64; 5] {
        let mut g = self.base;
        for (k, &i) in self.free.iter().enumerate() {
            g[i] = p[k];
        }
        g
    }

    fn model(&self, g: [f64; 5], out: &mut [f64]) {
        let geo = TrackGeometry::from_array(g);
        let mut field = self.field.clone();
        field.f_c_max = geo.f_c_max;
        for (o, p) in out.iter_mut().zip(self.positions) {
            *o = fc_at(&field, [geo.x_offset - p[0], geo.y - p[1], geo.z - p[2]], geo.theta);
        }
    }
}

impl LeastSquaresProblem for TrackProblem<'_> {
    fn n_residuals(&self) -> usize {
        self.data.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        self.model(self.expand(p), out);
        for (o, d) in out.iter_mut().zip(&self.data) {
            *o -= d;
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        let g = self.expand(p);
        g[0] >= 0.0 && g[4] >= 0.0 && g.iter().all(|v| v.is_finite())
    }

    fn scale(&self, j: usize) -> f64 {
        match self.free[j] {
            2 | 4 => 1.0,
            i => self.base[i].abs().max(1.0),
        }
    }
}

/// Least-squares fit of the emitter geometry to a measured f_c series.
pub fn fit_track(
    measured: &ScanResult,
    field: &FieldModel,
    init: &TrackGeometry,
    opts: &TrackFitOptions,
) -> Result<TrackFit> {
    measured.validate()?;
    field.validate()?;
    let data = measured.fc_series(opts.mode);
    if data.len() < 10 {
        return Err(Error::violation("fc", "at least 10 positions are required"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::violation("fc", "values must be finite"));
    }
    if let Some(bad) = opts.free.iter().find(|f| !GEOMETRY_NAMES.contains(&f.as_str())) {
        return Err(Error::violation("free", format!("unknown parameter `{bad}`")));
    }
    if data.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateJacobian("measured f_c series is identically zero".into()));
    }
    let free: Vec<usize> = (0..5).filter(|&i| opts.free.contains(GEOMETRY_NAMES[i])).collect();
    if free.is_empty() {
        return Err(Error::violation("free", "at least one parameter must be free"));
    }
    let names: Vec<String> = free.iter().map(|&i| GEOMETRY_NAMES[i].to_string()).collect();
    let base = init.to_array();
    let prob = TrackProblem {
        field: field.clone(),
        positions: &measured.track.positions,
        data,
        base,
        free: free.clone(),
    };
    let p0: Vec<f64> = free.iter().map(|&i| base[i]).collect();
    if !prob.feasible(&p0) {
        return Err(Error::violation("init", "z and f_c_max must be >= 0"));
    }
    lsq::check_rank(&lsq::jacobian(&prob, &p0), &names)?;
    let lm = lsq::minimize(
        &prob,
        &p0,
        &LmOptions {
            max_iterations: opts.max_iterations,
            ..Default::default()
        },
    )?;
    let se = lm.stderr();
    Ok(TrackFit {
        geometry: TrackGeometry::from_array(prob.expand(&lm.params)),
        stderr: names.iter().cloned().zip(se).collect(),
        free_parameters: names,
        residual_rms: (2.0 * lm.cost / prob.data.len() as f64).sqrt(),
        iterations: lm.iterations,
        converged: lm.converged,
        objective_history: lm.cost_history,
    })
}
