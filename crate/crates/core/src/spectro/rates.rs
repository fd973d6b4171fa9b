use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmissionBudget, Series, Spectrum, Unit, Validate};

/// Bins where the bare spectrum falls below this fraction of its maximum
/// are excluded from the Purcell spectrum.
pub const PURCELL_MASK_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurcellSpectrum {
    /// `F` per bin; masked bins hold 0.
    pub factor: Spectrum,
    /// `true` where the bin was excluded.
    pub masked: Vec<bool>,
}

impl PurcellSpectrum {
    /// `F` at the unmasked bin nearest to `x`.
    pub fn at(&self, x: f64) -> Option<f64> {
        self.factor
            .x
            .iter()
            .zip(&self.factor.y)
            .zip(&self.masked)
            .filter(|(_, &m)| !m)
            .min_by(|a, b| (a.0 .0 - x).abs().total_cmp(&(b.0 .0 - x).abs()))
            .map(|((_, &f), _)| f)
    }
}

/// Wavelength-resolved Purcell factor `F = I_c tau_0 / (I_0 tau_c)`.
///
/// Evaluated on the coupled spectrum's grid points that fall inside the
/// bare spectrum's range; the bare spectrum is linearly interpolated.
pub fn purcell_spectrum(
    i_coupled: &Spectrum,
    i_bare: &Spectrum,
    tau_c: f64,
    tau_0: f64,
) -> Result<PurcellSpectrum> {
    i_coupled.validate()?;
    i_bare.validate()?;
    if !(tau_c > 0.0) || !(tau_0 > 0.0) {
        return Err(Error::violation("tau", "lifetimes must be > 0"));
    }
    if i_coupled.x_unit != i_bare.x_unit {
        return Err(Error::GridMismatch(format!(
            "coupled spectrum in {} but bare spectrum in {}",
            i_coupled.x_unit, i_bare.x_unit
        )));
    }
    let (x, bare): (Vec<f64>, Vec<(usize, f64)>) = i_coupled
        .x
        .iter()
        .enumerate()
        .filter_map(|(i, &x)| i_bare.interpolate(x).map(|b| (x, (i, b))))
        .unzip();
    if x.is_empty() {
        return Err(Error::NoOverlap);
    }
    let floor = PURCELL_MASK_FLOOR * i_bare.max_y();
    let ratio = tau_0 / tau_c;
    let mut masked = Vec::with_capacity(x.len());
    let y = bare
        .iter()
        .map(|&(i, b)| {
            let m = !(b > floor);
            masked.push(m);
            if m {
                0.0
            } else {
                i_coupled.y[i] / b * ratio
            }
        })
        .collect();
    Ok(PurcellSpectrum {
        factor: Series::new(x, y, i_coupled.x_unit, Unit::Dimensionless)?,
        masked,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingFractions {
    pub channels: Vec<f64>,
    pub nonradiative: f64,
}

/// `beta_j = gamma_j / Gamma` and the nonradiative share.
pub fn branching_fractions(budget: &EmissionBudget) -> Result<BranchingFractions> {
    budget.validate()?;
    let total = budget.total_rate();
    let channels: Vec<f64> = budget.channel_rates.iter().map(|g| g / total).collect();
    // remainder keeps the sum at exactly 1
    let nonradiative = 1.0 - channels.iter().sum::<f64>();
    Ok(BranchingFractions {
        channels,
        nonradiative: if budget.nonradiative_rate == 0.0 {
            0.0
        } else {
            nonradiative
        },
    })
}

/// Detected intensity per channel, `c p eta_j gamma_j / Gamma`.
pub fn intensity_model(budget: &EmissionBudget) -> Result<Vec<f64>> {
    budget.validate()?;
    let total = budget.total_rate();
    Ok(budget
        .channel_rates
        .iter()
        .zip(&budget.collection_eff)
        .map(|(g, eta)| budget.proportionality * budget.pump_rate * eta * g / total)
        .collect())
}
