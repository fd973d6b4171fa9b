//! Sampled `(x, y)` series: the common currency for spectra and time traces.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::units::Unit;
use super::Validate;
use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_unit: Unit,
    pub y_unit: Unit,
}

/// A spectrum: x in nm (or rad/ns, GHz), y in counts or normalized units.
pub type Spectrum = Series;
/// A time trace: x in ns.
pub type TimeTrace = Series;

impl Series {
    /// Builds a series, checking equal lengths, finiteness and strictly increasing x.
    /// The sign of `y` is not checked here; see [`Validate`].
    pub fn new(x: Vec<f64>, y: Vec<f64>, x_unit: Unit, y_unit: Unit) -> Result<Self> {
        let s = Self {
            x,
            y,
            x_unit,
            y_unit,
        };
        let v = s.structural_violations();
        if v.is_empty() {
            Ok(s)
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Structural checks only (lengths, finiteness, increasing x); `y` may be negative.
    pub(crate) fn check_structure(&self) -> Result<()> {
        let v = self.structural_violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_range(&self) -> Option<(f64, f64)> {
        Some((*self.x.first()?, *self.x.last()?))
    }

    pub fn max_y(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation; `None` outside `[x_first, x_last]`.
    pub fn interpolate(&self, at: f64) -> Option<f64> {
        let (lo, hi) = self.x_range()?;
        if !(lo..=hi).contains(&at) {
            return None;
        }
        if self.len() == 1 {
            return Some(self.y[0]);
        }
        let i = self.x.partition_point(|&v| v <= at).clamp(1, self.len() - 1);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let (y0, y1) = (self.y[i - 1], self.y[i]);
        let t = (at - x0) / (x1 - x0);
        Some(y0 + t * (y1 - y0))
    }

    /// Resamples onto `grid`, failing for points outside the support.
    pub fn resample(&self, grid: &[f64]) -> Result<Series> {
        let (lo, hi) = self.x_range().ok_or(Error::NoOverlap)?;
        let y = grid
            .iter()
            .map(|&g| {
                self.interpolate(g)
                    .ok_or(Error::GridOutsideBaseline { value: g, lo, hi })
            })
            .collect::<Result<Vec<_>>>()?;
        Series::new(grid.to_vec(), y, self.x_unit, self.y_unit)
    }

    pub fn scaled(&self, factor: f64) -> Series {
        Series {
            y: self.y.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// SHA-256 over the little-endian bytes of x then y, hex encoded.
    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        for v in self.x.iter().chain(&self.y) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.x.len() != self.y.len() {
            v.push(Violation::new(
                "y",
                format!("length {} != x length {}", self.y.len(), self.x.len()),
            ));
        }
        if self.x.iter().chain(&self.y).any(|a| !a.is_finite()) {
            v.push(Violation::new("x/y", "all samples must be finite"));
        }
        if let Some(i) = self.x.windows(2).position(|w| w[1] <= w[0]) {
            v.push(Violation::new(
                "x",
                format!("not strictly increasing at index {}", i + 1),
            ));
        }
        v
    }

    /// Writes `x_<unit>,y_<unit>` CSV with LF line endings.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wr.write_record([format!("x_{}", self.x_unit), format!("y_{}", self.y_unit)])?;
        for (x, y) in self.x.iter().zip(&self.y) {
            wr.write_record([x.to_string(), y.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Series> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.len() != 2 {
            return Err(Error::Parse(format!(
                "expected 2 columns, found {}",
                headers.len()
            )));
        }
        let unit = |h: &str, prefix: &str| -> Result<Unit> {
            h.strip_prefix(prefix)
                .ok_or_else(|| Error::Parse(format!("header `{h}` must start with `{prefix}`")))?
                .parse()
        };
        let x_unit = unit(&headers[0], "x_")?;
        let y_unit = unit(&headers[1], "y_")?;
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: `{s}`: {e}", line + 2)))
            };
            x.push(parse(&rec[0])?);
            y.push(parse(&rec[1])?);
        }
        Series::new(x, y, x_unit, y_unit)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Series> {
        let f = std::fs::File::open(path)?;
        Series::read_csv(std::io::BufReader::new(f))
    }
}

impl Validate for Series {
    fn violations(&self) -> Vec<Violation> {
        let mut v = self.structural_violations();
        if self.y.iter().any(|&a| a < 0.0) {
            v.push(Violation::new("y", "must be non-negative"));
        }
        v
    }
}
