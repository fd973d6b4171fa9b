//! Run configuration: built-in defaults, an optional JSON file, then
//! `--set key=value` overrides, applied in that order.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use scm_core::qstats::{SpinParams, ThreeLevelRates};
use scm_core::scanfield::{Deconvolution, FieldModel, TrackGeometry};
use scm_core::spectro::{ModeEstimate, SpectrumFitOptions, Weighting};
use scm_core::{CavityMode, CoupledSystemParams, DetectionCoeffs};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub format_version: u32,
    pub spectrum: SpectrumSection,
    pub fit: FitSection,
    pub scan: ScanSection,
    pub deconvolve: DeconvolveSection,
    pub hbt: HbtSection,
    pub spin: SpinSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            spectrum: Default::default(),
            fit: Default::default(),
            scan: Default::default(),
            deconvolve: Default::default(),
            hbt: Default::default(),
            spin: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Detected spectrum model on a wavelength grid.
    Detected,
    /// Emission spectrum of the coupled emitter-cavity dynamics on a
    /// relative angular-frequency grid.
    Numeric,
}

fn reference_modes() -> Vec<ModeEstimate> {
    vec![
        ModeEstimate {
            lambda_c: 643.0,
            q_factor: 610.0,
            f_c: 5.3,
        },
        ModeEstimate {
            lambda_c: 667.3,
            q_factor: 550.0,
            f_c: 0.7,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub kind: SpectrumKind,
    /// Bare emitter spectrum CSV; a synthetic NV sideband when absent.
    pub baseline: Option<PathBuf>,
    pub lambda_start: f64,
    pub lambda_stop: f64,
    pub points: usize,
    pub modes: Vec<ModeEstimate>,
    pub coeffs: DetectionCoeffs,
    /// Poisson counting noise, expected counts at the baseline maximum.
    pub noise_peak_counts: Option<f64>,
    pub system: CoupledSystemParams,
    /// Half range of the numeric grid (rad/ns).
    pub omega_span: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        let cavity = CavityMode::new(667.3, 550.0);
        Self {
            kind: SpectrumKind::Detected,
            baseline: None,
            lambda_start: 620.0,
            lambda_stop: 700.0,
            points: 1601,
            modes: reference_modes(),
            coeffs: DetectionCoeffs::incoherent(1.0, 1.0),
            noise_peak_counts: None,
            system: CoupledSystemParams {
                detuning: 0.0,
                g: 0.5,
                kappa: cavity.kappa_energy(),
                gamma: 1.0 / ThreeLevelRates::DEFAULT_LIFETIME,
                gamma_d: 1.0,
            },
            omega_span: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Spectrum CSV to fit; synthetic data from the `spectrum` section when absent.
    pub data: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub init_modes: Vec<ModeEstimate>,
    pub init_coeffs: DetectionCoeffs,
    pub fixed: BTreeSet<String>,
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Counts at the baseline maximum for synthetic data.
    pub synthetic_peak_counts: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let opts = SpectrumFitOptions::multimode();
        Self {
            data: None,
            baseline: None,
            init_modes: vec![
                ModeEstimate {
                    lambda_c: 643.3,
                    q_factor: 560.0,
                    f_c: 4.0,
                },
                ModeEstimate {
                    lambda_c: 667.0,
                    q_factor: 500.0,
                    f_c: 1.0,
                },
            ],
            init_coeffs: DetectionCoeffs::incoherent(1.0, 1.0),
            fixed: opts.fixed,
            weighting: opts.weighting,
            max_iterations: opts.max_iterations,
            synthetic_peak_counts: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackFitSection {
    pub init: TrackGeometry,
    pub free: BTreeSet<String>,
    pub mode: usize,
    pub max_iterations: usize,
}

impl Default for TrackFitSection {
    fn default() -> Self {
        Self {
            init: TrackGeometry {
                z: 40.0,
                y: 0.0,
                theta: 0.0,
                x_offset: 10.0,
                f_c_max: 5.3,
            },
            free: ["z", "x_offset"].map(String::from).into(),
            mode: 0,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub fields: Vec<FieldModel>,
    pub emitter_position: [f64; 3],
    pub dipole_angle: f64,
    pub baseline: Option<PathBuf>,
    pub coeffs: DetectionCoeffs,
    pub x_start: f64,
    pub step: f64,
    pub points: usize,
    /// Lateral offsets of the raster rows (nm).
    pub rows: Vec<f64>,
    pub z: f64,
    /// Standard deviation of the cumulative in-plane positioner slip per step (nm).
    pub slip: f64,
    pub lambda_start: f64,
    pub lambda_stop: f64,
    pub spectrum_points: usize,
    pub noise_peak_counts: Option<f64>,
    /// Fit f_c at every position from its spectrum.
    pub fit_spectra: bool,
    pub track_fit: Option<TrackFitSection>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            fields: vec![
                FieldModel::new(CavityMode::new(643.0, 610.0), 5.3),
                FieldModel::new(CavityMode::new(667.3, 550.0), 0.7),
            ],
            emitter_position: [0.0, 0.0, 20.0],
            dipole_angle: 0.0,
            baseline: None,
            coeffs: DetectionCoeffs::incoherent(1.0, 1.0),
            x_start: -300.0,
            step: 3.4,
            points: 177,
            rows: vec![0.0],
            z: 0.0,
            slip: 0.0,
            lambda_start: 630.0,
            lambda_stop: 680.0,
            spectrum_points: 501,
            noise_peak_counts: None,
            fit_spectra: true,
            track_fit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeconvolveKind {
    /// 1D PL line scan and response CSVs.
    Line,
    /// 2D gridded CSV matrices.
    Field,
}

/// One Gaussian feature of the synthetic sample: amplitude, center (nm), width (nm).
pub type Feature = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvolveSection {
    pub kind: DeconvolveKind,
    pub pl: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub method: Deconvolution,
    pub field: FieldModel,
    /// Height of the response cut above the slab (nm).
    pub z: f64,
    pub step: f64,
    pub points: usize,
    pub response_half_points: usize,
    pub features: Vec<Feature>,
    /// Gaussian noise relative to the PL maximum.
    pub noise: f64,
}

impl Default for DeconvolveSection {
    fn default() -> Self {
        Self {
            kind: DeconvolveKind::Line,
            pl: None,
            response: None,
            method: Deconvolution::default(),
            field: FieldModel::new(CavityMode::new(667.3, 550.0), 1.0),
            z: 0.0,
            step: 3.4,
            points: 1200,
            response_half_points: 200,
            features: vec![[1.0, 1500.0, 200.0], [0.6, 2100.0, 200.0], [0.8, 2700.0, 200.0]],
            noise: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbtSection {
    pub rates: ThreeLevelRates,
    /// Run the photon-counting simulation in addition to the rate model.
    pub simulate: bool,
    pub total_time: f64,
    pub bin_width: f64,
    pub max_delay: f64,
    pub dark_count_rate: f64,
}

impl Default for HbtSection {
    fn default() -> Self {
        Self {
            rates: ThreeLevelRates::default(),
            simulate: true,
            total_time: 2e7,
            bin_width: 1.0,
            max_delay: 300.0,
            dark_count_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinSection {
    pub params: SpinParams,
    /// Axial magnetic field (T); when set, replaces `params.zeeman_split` by `2 gamma B`.
    pub field_tesla: Option<f64>,
    /// GHz/T.
    pub gyromagnetic_ratio: f64,
    pub nu_start: f64,
    pub nu_stop: f64,
    pub nu_points: usize,
    pub rabi_duration: f64,
    pub rabi_points: usize,
}

impl Default for SpinSection {
    fn default() -> Self {
        Self {
            params: SpinParams::default(),
            field_tesla: None,
            gyromagnetic_ratio: 28.0,
            nu_start: 2.77,
            nu_stop: 2.97,
            nu_points: 401,
            rabi_duration: 300.0,
            rabi_points: 301,
        }
    }
}

/// A config file is either a plain config object or a run manifest, whose
/// `config` and `seed` are reused.
pub struct Loaded {
    pub config: Config,
    pub manifest_seed: Option<u64>,
}

pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Loaded, CliError> {
    let mut value = serde_json::to_value(Config::default()).expect("default config serializes");
    let mut manifest_seed = None;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        let mut file: Value =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
        if file.get("format_version").is_some() && file.get("tool").is_some() {
            manifest_seed = file.get("seed").and_then(Value::as_u64);
            file = file.get("config").cloned().unwrap_or(Value::Null);
        }
        merge(&mut value, file);
    }
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("override `{o}` is not of the form key=value")))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key, v)?;
    }
    let config: Config = serde_json::from_value(value).map_err(|e| CliError::input(format!("config: {e}")))?;
    if config.format_version != FORMAT_VERSION {
        return Err(CliError::input(format!(
            "config format_version {} is not supported (expected {FORMAT_VERSION})",
            config.format_version
        )));
    }
    Ok(Loaded { config, manifest_seed })
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

/// Sets a dotted path; numeric segments index into arrays and missing or
/// null sections are created.
fn set_path(root: &mut Value, key: &str, v: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = root;
    for part in parents {
        cur = child(cur, part, key)?;
    }
    *child(cur, last, key)? = v;
    Ok(())
}

fn child<'a>(cur: &'a mut Value, part: &str, key: &str) -> Result<&'a mut Value, CliError> {
    if cur.is_null() {
        *cur = Value::Object(Default::default());
    }
    match cur {
        Value::Object(m) => Ok(m.entry(part.to_string()).or_insert(Value::Null)),
        Value::Array(a) => {
            let len = a.len();
            part.parse::<usize>()
                .ok()
                .and_then(|i| a.get_mut(i))
                .ok_or_else(|| CliError::input(format!("`{key}`: `{part}` is not an index below {len}")))
        }
        _ => Err(CliError::input(format!("`{key}`: cannot descend into `{part}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_values() {
        let c = resolve(None, &["scan.points=60".into(), "spectrum.kind=numeric".into()])
            .unwrap()
            .config;
        assert_eq!(c.scan.points, 60);
        assert_eq!(c.spectrum.kind, SpectrumKind::Numeric);
    }

    #[test]
    fn array_index_and_null_sections() {
        let c = resolve(
            None,
            &[
                "spectrum.modes.1.f_c=2.5".into(),
                "scan.track_fit.mode=1".into(),
            ],
        )
        .unwrap()
        .config;
        assert_eq!(c.spectrum.modes[1].f_c, 2.5);
        assert_eq!(c.scan.track_fit.unwrap().mode, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve(None, &["scan.pionts=60".into()]).is_err());
        assert!(resolve(None, &["no_equals".into()]).is_err());
        assert!(resolve(None, &["format_version=2".into()]).is_err());
    }
}
