//! Unit conventions: rates in rad/ns, wavelengths in nm, times in ns.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Speed of light in nm/ns.
pub const SPEED_OF_LIGHT: f64 = 299_792.458;

/// Angular frequency (rad/ns) of light with vacuum wavelength `nm`.
#[inline]
pub fn omega_from_wavelength(nm: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / nm
}

/// Vacuum wavelength (nm) of light with angular frequency `omega` (rad/ns).
#[inline]
pub fn wavelength_from_omega(omega: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / omega
}

/// Axis unit tokens used in CSV headers (`x_<unit>,y_<unit>`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Nm,
    Ns,
    RadPerNs,
    #[serde(rename = "GHz")]
    Ghz,
    Counts,
    Normalized,
    Dimensionless,
}

impl Unit {
    pub fn token(self) -> &'static str {
        match self {
            Unit::Nm => "nm",
            Unit::Ns => "ns",
            Unit::RadPerNs => "rad_per_ns",
            Unit::Ghz => "GHz",
            Unit::Counts => "counts",
            Unit::Normalized => "normalized",
            Unit::Dimensionless => "dimensionless",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "nm" => Unit::Nm,
            "ns" => Unit::Ns,
            "rad_per_ns" => Unit::RadPerNs,
            "GHz" => Unit::Ghz,
            "counts" => Unit::Counts,
            "normalized" => Unit::Normalized,
            "dimensionless" => Unit::Dimensionless,
            other => return Err(Error::Parse(format!("unknown unit `{other}`"))),
        })
    }
}
