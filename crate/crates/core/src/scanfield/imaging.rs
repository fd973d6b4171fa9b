//! Scan imaging: the photoluminescence map is the sample's emitter density
//! convolved with the single-emitter response along the scan path,
//! `PL(r) = sum_k e(r - r_k) R(r_k) w_k` with trapezoidal weights `w_k`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Series, Unit};

/// A uniformly sampled 2D field, stored row-major (`values[iy * nx + ix]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    pub nx: usize,
    pub ny: usize,
    /// Grid spacing (nm).
    pub dx: f64,
    pub dy: f64,
    pub values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        Self {
            nx,
            ny,
            dx,
            dy,
            values: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, dx: f64, dy: f64, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..ny).flat_map(|iy| (0..nx).map(move |ix| (ix, iy))).map(|(ix, iy)| f(ix, iy)).collect();
        Self { nx, ny, dx, dy, values }
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: f64) {
        self.values[iy * self.nx + ix] = v;
    }

    fn check(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.values.len() != self.nx * self.ny {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                self.values.len(),
                self.nx,
                self.ny
            )));
        }
        if !(self.dx > 0.0 && self.dy > 0.0) {
            return Err(Error::violation("dx", "grid spacing must be > 0"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::violation("values", "must be finite"));
        }
        Ok(())
    }

    /// CSV matrix, one grid row per line, after a `# nx=.. ny=.. dx_nm=.. dy_nm=..` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# nx={} ny={} dx_nm={} dy_nm={}", self.nx, self.ny, self.dx, self.dy)?;
        for row in self.values.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Accepts either `key=value` or four bare numbers in the header.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        let head = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing `# nx ny dx_nm dy_nm` header".into()))?;
        let nums: Vec<&str> = head
            .split_whitespace()
            .map(|t| t.rsplit('=').next().unwrap_or(t))
            .collect();
        if nums.len() != 4 {
            return Err(Error::Parse(format!("header needs 4 fields, found {}", nums.len())));
        }
        let bad = |t: &str| Error::Parse(format!("bad header value `{t}`"));
        let nx: usize = nums[0].parse().map_err(|_| bad(nums[0]))?;
        let ny: usize = nums[1].parse().map_err(|_| bad(nums[1]))?;
        let dx: f64 = nums[2].parse().map_err(|_| bad(nums[2]))?;
        let dy: f64 = nums[3].parse().map_err(|_| bad(nums[3]))?;
        let mut values = Vec::with_capacity(nx * ny);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad value `{t}`"))))
                .collect::<Result<_>>()?;
            if row.len() != nx {
                return Err(Error::Parse(format!("row has {} values, expected {nx}", row.len())));
            }
            values.extend(row);
        }
        let f = Self { nx, ny, dx, dy, values };
        f.check().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(File::open(path)?)
    }
}

/// How [`deconvolve`] inverts the response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Deconvolution {
    /// Fourier-domain inverse `P conj(H) / (|H|^2 + epsilon)`; `epsilon`
    /// defaults to `1e-3 max |H|^2`.
    Regularized { epsilon: Option<f64> },
    /// Multiplicative Richardson-Lucy updates for non-negative signals.
    RichardsonLucy { iterations: usize },
}

impl Default for Deconvolution {
    fn default() -> Self {
        Self::Regularized { epsilon: None }
    }
}

struct Kernel {
    nx: usize,
    ny: usize,
    cx: usize,
    cy: usize,
    w: Vec<f64>,
}

fn trapezoid(n: usize, d: f64) -> Vec<f64> {
    (0..n)
        .map(|i| if n > 1 && (i == 0 || i == n - 1) { 0.5 * d } else { d })
        .collect()
}

impl Kernel {
    fn new(nx: usize, ny: usize, cx: usize, cy: usize, dx: f64, dy: f64, r: &[f64]) -> Result<Self> {
        let wx = trapezoid(nx, dx);
        // a 1D response integrates along the path only
        let wy = if ny == 1 { vec![1.0] } else { trapezoid(ny, dy) };
        let w: Vec<f64> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| r[j * nx + i] * wx[i] * wy[j])
            .collect();
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroResponse);
        }
        Ok(Self { nx, ny, cx, cy, w })
    }

    fn offsets(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        (0..self.ny).flat_map(move |j| {
            (0..self.nx).filter_map(move |i| {
                let v = self.w[j * self.nx + i];
                (v != 0.0).then_some((i as isize - self.cx as isize, j as isize - self.cy as isize, v))
            })
        })
    }

    /// `out[p] = sum_k w_k e[p - k]`, zero outside the sample.
    fn apply(&self, e: &[f64], nx: usize, ny: usize) -> Vec<f64> {
        let mut out = vec![0.0; nx * ny];
        for (ox, oy, v) in self.offsets() {
            for iy in 0..ny as isize {
                let sy = iy - oy;
                if sy < 0 || sy >= ny as isize {
                    continue;
                }
                for ix in 0..nx as isize {
                    let sx = ix - ox;
                    if sx >= 0 && sx < nx as isize {
                        out[(iy as usize) * nx + ix as usize] += v * e[sy as usize * nx + sx as usize];
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`Kernel::apply`].
    fn adjoint(&self, r: &[f64], nx: usize, ny: usize) -> Vec<f64> {
        let mut out = vec![0.0; nx * ny];
        for (ox, oy, v) in self.offsets() {
            for sy in 0..ny as isize {
                let iy = sy + oy;
                if iy < 0 || iy >= ny as isize {
                    continue;
                }
                for sx in 0..nx as isize {
                    let ix = sx + ox;
                    if ix >= 0 && ix < nx as isize {
                        out[sy as usize * nx + sx as usize] += v * r[iy as usize * nx + ix as usize];
                    }
                }
            }
        }
        out
    }
}

fn uniform_step(x: &[f64], what: &str) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::GridMismatch(format!("{what} needs at least 2 points")));
    }
    let d = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if x.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-6 * d) {
        return Err(Error::GridMismatch(format!("{what} is not uniformly spaced")));
    }
    Ok(d)
}

fn kernel_1d(sample: &Series, response: &Series) -> Result<Kernel> {
    sample.check_structure()?;
    response.check_structure()?;
    if sample.x_unit != response.x_unit {
        return Err(Error::GridMismatch("sample and response use different position units".into()));
    }
    let dl = uniform_step(&sample.x, "sample grid")?;
    let (dr, c) = if response.len() == 1 {
        (dl, -response.x[0] / dl)
    } else {
        let dr = uniform_step(&response.x, "response grid")?;
        (dr, -response.x[0] / dr)
    };
    if (dr - dl).abs() > 1e-6 * dl {
        return Err(Error::GridMismatch(format!("sample step {dl} nm, response step {dr} nm")));
    }
    let ci = c.round();
    if (c - ci).abs() > 1e-6 || ci < 0.0 || ci as usize >= response.len() {
        return Err(Error::GridMismatch("response grid must contain x = 0 as a sample point".into()));
    }
    Kernel::new(response.len(), 1, ci as usize, 0, dl, 1.0, &response.y)
}

/// Convolves a sample density with a single-emitter response along a line.
/// The response's x axis gives offsets from the emitter and must contain 0.
pub fn convolve_sample(sample: &Series, response: &Series) -> Result<Series> {
    let k = kernel_1d(sample, response)?;
    let y = k.apply(&sample.y, sample.len(), 1);
    Series::new(sample.x.clone(), y, sample.x_unit, response.y_unit)
}

/// Estimates the sample density from a measured line profile.
pub fn deconvolve(pl: &Series, response: &Series, method: Deconvolution) -> Result<Series> {
    let k = kernel_1d(pl, response)?;
    let y = invert(&k, &pl.y, pl.len(), 1, method)?;
    Series::new(pl.x.clone(), y, pl.x_unit, Unit::Normalized)
}

fn kernel_2d(sample: &Field2D, response: &Field2D) -> Result<Kernel> {
    sample.check()?;
    response.check()?;
    if (sample.dx - response.dx).abs() > 1e-9 * sample.dx || (sample.dy - response.dy).abs() > 1e-9 * sample.dy {
        return Err(Error::GridMismatch("sample and response spacings differ".into()));
    }
    if response.nx % 2 == 0 || response.ny % 2 == 0 {
        return Err(Error::GridMismatch("response dimensions must be odd (centered kernel)".into()));
    }
    let (dx, dy) = (sample.dx, sample.dy);
    let wy_dy = if response.ny == 1 { 1.0 } else { dy };
    Kernel::new(response.nx, response.ny, response.nx / 2, response.ny / 2, dx, wy_dy, &response.values)
}

/// 2D raster generalization of [`convolve_sample`]; the response is centered
/// on its middle sample.
pub fn convolve_field(sample: &Field2D, response: &Field2D) -> Result<Field2D> {
    let k = kernel_2d(sample, response)?;
    Ok(Field2D {
        values: k.apply(&sample.values, sample.nx, sample.ny),
        ..sample.clone()
    })
}

pub fn deconvolve_field(pl: &Field2D, response: &Field2D, method: Deconvolution) -> Result<Field2D> {
    let k = kernel_2d(pl, response)?;
    Ok(Field2D {
        values: invert(&k, &pl.values, pl.nx, pl.ny, method)?,
        ..pl.clone()
    })
}

fn invert(k: &Kernel, pl: &[f64], nx: usize, ny: usize, method: Deconvolution) -> Result<Vec<f64>> {
    match method {
        Deconvolution::Regularized { epsilon } => regularized(k, pl, nx, ny, epsilon),
        Deconvolution::RichardsonLucy { iterations } => Ok(richardson_lucy(k, pl, nx, ny, iterations)),
    }
}

fn fft2(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(nx), planner.plan_fft_inverse(ny))
    } else {
        (planner.plan_fft_forward(nx), planner.plan_fft_forward(ny))
    };
    for r in data.chunks_mut(nx) {
        row.process(r);
    }
    if ny > 1 {
        let mut buf = vec![Complex64::new(0.0, 0.0); ny];
        for ix in 0..nx {
            for iy in 0..ny {
                buf[iy] = data[iy * nx + ix];
            }
            col.process(&mut buf);
            for iy in 0..ny {
                data[iy * nx + ix] = buf[iy];
            }
        }
    }
}

fn regularized(k: &Kernel, pl: &[f64], nx: usize, ny: usize, epsilon: Option<f64>) -> Result<Vec<f64>> {
    // padding keeps the circular product equal to the linear convolution
    let px = nx + k.nx - 1;
    let py = ny + k.ny - 1;
    let zero = Complex64::new(0.0, 0.0);
    let mut h = vec![zero; px * py];
    for (ox, oy, v) in k.offsets() {
        let i = ox.rem_euclid(px as isize) as usize;
        let j = oy.rem_euclid(py as isize) as usize;
        h[j * px + i] += v;
    }
    let mut p = vec![zero; px * py];
    for iy in 0..ny {
        for ix in 0..nx {
            p[iy * px + ix] = Complex64::new(pl[iy * nx + ix], 0.0);
        }
    }
    fft2(&mut h, px, py, false);
    fft2(&mut p, px, py, false);
    let hmax = h.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let eps = epsilon.unwrap_or(1e-3 * hmax);
    if !(eps > 0.0) {
        return Err(Error::violation("epsilon", "must be > 0"));
    }
    for (pv, hv) in p.iter_mut().zip(&h) {
        *pv = *pv * hv.conj() / (hv.norm_sqr() + eps);
    }
    fft2(&mut p, px, py, true);
    let n = (px * py) as f64;
    Ok((0..ny)
        .flat_map(|iy| (0..nx).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| p[iy * px + ix].re / n)
        .collect())
}

fn richardson_lucy(k: &Kernel, pl: &[f64], nx: usize, ny: usize, iterations: usize) -> Vec<f64> {
    let data: Vec<f64> = pl.iter().map(|v| v.max(0.0)).collect();
    let norm = k.adjoint(&vec![1.0; nx * ny], nx, ny);
    let total_k: f64 = k.w.iter().sum();
    let mean = data.iter().sum::<f64>() / (data.len() as f64 * total_k.abs().max(f64::MIN_POSITIVE));
    let mut e = vec![mean.max(f64::MIN_POSITIVE); nx * ny];
    for _ in 0..iterations {
        let est = k.apply(&e, nx, ny);
        let ratio: Vec<f64> = data
            .iter()
            .zip(&est)
            .map(|(d, m)| if *m > 0.0 { d / m } else { 0.0 })
            .collect();
        let corr = k.adjoint(&ratio, nx, ny);
        for i in 0..e.len() {
            e[i] = if norm[i] > 0.0 { e[i] * corr[i] / norm[i] } else { 0.0 };
        }
    }
    e
}
