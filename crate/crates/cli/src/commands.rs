use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use scm_core::dynamics::emission_spectrum_numeric;
use scm_core::model::{omega_from_wavelength, wavelength_from_omega};
use scm_core::qstats::{esr_spectrum, g2_rate_model, hbt_histogram, rabi_trace, HbtOptions, ThreeLevelRates};
use scm_core::scanfield::{
    self as field_ops, convolve_sample, deconvolve_field, fc_at, fit_track, simulate_scan, ScanNoise, ScanResult,
    ScanTrack, TrackFit, TrackFitOptions,
};
use scm_core::spectro::{
    detected_spectrum_nm, detection_factor, fit_spectrum, linspace, nv_sideband, ModeEstimate, SpectrumFit,
    SpectrumFitOptions,
};
use scm_core::{Emitter, Series, Spectrum, Unit};
use serde::Serialize;

use crate::config::{Config, DeconvolveKind, SpectrumKind};
use crate::output::{OutputDir, Table};
use crate::CliError;

fn grid(start: f64, stop: f64, n: usize, name: &str) -> Result<Vec<f64>, CliError> {
    if n < 2 || !(stop > start) {
        return Err(CliError::input(format!(
            "{name}: need at least 2 points and start < stop (got {start}..{stop}, {n} points)"
        )));
    }
    Ok(linspace(start, stop, n))
}

/// Replaces each value by a Poisson draw with mean `scale * value`.
fn poisson_counts(s: &mut Series, scale: f64, rng: &mut ChaCha8Rng) {
    for y in &mut s.y {
        let mean = *y * scale;
        *y = if mean > 0.0 {
            Poisson::new(mean).map_or(mean, |d| d.sample(rng))
        } else {
            0.0
        };
    }
    s.y_unit = Unit::Counts;
}

fn positive_counts(k: f64, name: &str) -> Result<f64, CliError> {
    if k > 0.0 && k.is_finite() {
        Ok(k)
    } else {
        Err(CliError::input(format!("{name} must be > 0")))
    }
}

/// Bare spectrum from a file, or the synthetic sideband with a 1 nm margin.
fn bare_spectrum(out: &mut OutputDir, path: Option<&Path>, lo: f64, hi: f64, n: usize) -> Result<Spectrum, CliError> {
    match path {
        Some(p) => out.load_series(p),
        None => Ok(nv_sideband(&linspace(lo - 1.0, hi + 1.0, n + 2))?),
    }
}

struct Detected {
    spectrum: Spectrum,
    /// Baseline on the same grid and in the same units as `spectrum`.
    baseline: Spectrum,
}

fn detected(cfg: &Config, out: &mut OutputDir, rng: &mut ChaCha8Rng, peak_counts: Option<f64>) -> Result<Detected, CliError> {
    let s = &cfg.spectrum;
    let grid = grid(s.lambda_start, s.lambda_stop, s.points, "spectrum grid")?;
    let bare = bare_spectrum(out, s.baseline.as_deref(), s.lambda_start, s.lambda_stop, s.points)?;
    let lines: Vec<_> = s.modes.iter().map(ModeEstimate::line).collect();
    let mut spectrum = detected_spectrum_nm(&s.coeffs, &lines, &bare, &grid)?;
    let mut baseline = bare.resample(&grid)?;
    if let Some(k) = peak_counts {
        let scale = positive_counts(k, "peak counts")? / bare.max_y();
        poisson_counts(&mut spectrum, scale, rng);
        baseline = baseline.scaled(scale);
        baseline.y_unit = Unit::Counts;
    }
    Ok(Detected { spectrum, baseline })
}

pub fn spectrum(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let s = &cfg.spectrum;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match s.kind {
        SpectrumKind::Detected => {
            let d = detected(cfg, out, &mut rng, s.noise_peak_counts)?;
            out.series("spectrum.csv", &d.spectrum)?;
            out.series("baseline.csv", &d.baseline)?;
        }
        SpectrumKind::Numeric => {
            let g = grid(-s.omega_span, s.omega_span, s.points, "spectrum grid")?;
            let mut spec = emission_spectrum_numeric(&s.system, &s.coeffs, &g)?;
            if let Some(k) = s.noise_peak_counts {
                let scale = positive_counts(k, "spectrum.noise_peak_counts")? / spec.max_y();
                poisson_counts(&mut spec, scale, &mut rng);
            }
            out.series("spectrum.csv", &spec)?;
        }
    }
    Ok(())
}

fn baseline_value(baseline: &Spectrum, omega: f64) -> Option<f64> {
    match baseline.x_unit {
        Unit::Nm => baseline.interpolate(wavelength_from_omega(omega)),
        _ => baseline.interpolate(omega),
    }
}

pub fn fit(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let f = &cfg.fit;
    let (data, baseline) = match (&f.data, &f.baseline) {
        (Some(d), Some(b)) => (out.load_series(d)?, out.load_series(b)?),
        (None, None) => {
            if cfg.spectrum.kind != SpectrumKind::Detected {
                return Err(CliError::input("synthetic fit data needs spectrum.kind = detected"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = detected(cfg, out, &mut rng, Some(f.synthetic_peak_counts))?;
            out.series("data.csv", &d.spectrum)?;
            out.series("baseline.csv", &d.baseline)?;
            (d.spectrum, d.baseline)
        }
        _ => return Err(CliError::input("fit.data and fit.baseline must be given together")),
    };
    let init = SpectrumFit::guess(f.init_modes.clone(), f.init_coeffs);
    let opts = SpectrumFitOptions {
        fixed: f.fixed.clone(),
        weighting: f.weighting,
        max_iterations: f.max_iterations,
    };
    let result = fit_spectrum(&data, &baseline, &init, &opts)?;
    out.json("fit.json", &result)?;

    let lines = result.lines();
    let mut table = Table::new(&[format!("x_{}", data.x_unit).as_str(), "data", "model", "residual"]);
    for (&x, &y) in data.x.iter().zip(&data.y) {
        let omega = match data.x_unit {
            Unit::Nm => omega_from_wavelength(x),
            _ => x,
        };
        if let Some(b) = baseline_value(&baseline, omega) {
            let model = b * detection_factor(&result.coeffs, &lines, omega);
            table.row(&[x, y, model, y - model]);
        }
    }
    out.table("residuals.csv", &table)
}

#[derive(Serialize)]
struct ScanReport<'a> {
    result: &'a ScanResult,
    track_fit: Option<TrackFit>,
}

pub fn scan(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let s = &cfg.scan;
    if s.fields.is_empty() {
        return Err(CliError::input("scan.fields must list at least one cavity mode"));
    }
    grid(s.lambda_start, s.lambda_stop, s.spectrum_points, "scan spectral grid")?;
    let omega = linspace(
        omega_from_wavelength(s.lambda_stop),
        omega_from_wavelength(s.lambda_start),
        s.spectrum_points,
    );
    let bare = bare_spectrum(out, s.baseline.as_deref(), s.lambda_start, s.lambda_stop, s.spectrum_points)?;
    let emitter = Emitter {
        bare_spectrum: bare.clone(),
        tau0: ThreeLevelRates::DEFAULT_LIFETIME,
        position: s.emitter_position,
        dipole_angle: s.dipole_angle,
        spin: Default::default(),
    };
    let mut track = ScanTrack::raster(s.x_start, s.step, s.points, &s.rows, s.z)?;
    if s.slip > 0.0 {
        track = track.with_slip(s.slip, seed.wrapping_add(1))?;
    }
    let noise = match s.noise_peak_counts {
        Some(k) => Some(ScanNoise {
            peak_counts: positive_counts(k, "scan.noise_peak_counts")?,
            seed,
        }),
        None => None,
    };
    let mut result = simulate_scan(&s.fields, &emitter, &s.coeffs, &track, &omega, noise)?;

    if s.fit_spectra {
        let scale = noise.map_or(1.0, |n| n.peak_counts / bare.max_y());
        let baseline = bare.scaled(scale);
        let modes = s
            .fields
            .iter()
            .map(|f| ModeEstimate {
                lambda_c: f.mode.lambda_c,
                q_factor: f.mode.q_factor,
                f_c: 1.0,
            })
            .collect();
        let init = SpectrumFit::guess(modes, s.coeffs);
        let mut fixed: std::collections::BTreeSet<String> = ["c_cav", "c_int", "delta_phi"].map(String::from).into();
        for i in 0..s.fields.len() {
            fixed.insert(format!("lambda_c.{i}"));
            fixed.insert(format!("q_factor.{i}"));
        }
        let opts = SpectrumFitOptions {
            fixed,
            ..SpectrumFitOptions::multimode()
        };
        result.fits = result
            .spectra
            .par_iter()
            .map(|sp| fit_spectrum(sp, &baseline, &init, &opts))
            .collect::<Result<Vec<_>, _>>()?;
    }

    let n_modes = s.fields.len();
    let mut header: Vec<String> = ["index", "x_nm", "y_nm", "z_nm"].map(String::from).into();
    header.extend((0..n_modes).map(|m| format!("fc_{m}")));
    if !result.fits.is_empty() {
        header.extend((0..n_modes).map(|m| format!("fit_fc_{m}")));
    }
    let mut table = Table::new(&header);
    for (i, p) in result.track.positions.iter().enumerate() {
        let mut row = vec![i as f64, p[0], p[1], p[2]];
        row.extend(&result.fc[i]);
        if let Some(fit) = result.fits.get(i) {
            row.extend(fit.modes.iter().map(|m| m.f_c));
        }
        table.row(&row);
    }
    out.table("fc_track.csv", &table)?;

    let mut spectra = Table::new(&["position".to_string(), "x_rad_per_ns".into(), "y".into()]);
    for (i, sp) in result.spectra.iter().enumerate() {
        for (&x, &y) in sp.x.iter().zip(&sp.y) {
            spectra.row(&[i as f64, x, y]);
        }
    }
    out.table("scan_spectra.csv", &spectra)?;

    let track_fit = match &s.track_fit {
        Some(tf) => {
            let field = s
                .fields
                .get(tf.mode)
                .ok_or_else(|| CliError::input(format!("scan.track_fit.mode {} has no field", tf.mode)))?;
            let measured = if result.fits.is_empty() {
                result.clone()
            } else {
                ScanResult {
                    fc: result.fits.iter().map(|f| f.modes.iter().map(|m| m.f_c).collect()).collect(),
                    ..result.clone()
                }
            };
            let opts = TrackFitOptions {
                free: tf.free.clone(),
                mode: tf.mode,
                max_iterations: tf.max_iterations,
            };
            Some(fit_track(&measured, field, &tf.init, &opts)?)
        }
        None => None,
    };
    // spectra already went to scan_spectra.csv
    result.spectra.clear();
    out.json(
        "scan_result.json",
        &ScanReport {
            result: &result,
            track_fit,
        },
    )
}

pub fn deconvolve(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let d = &cfg.deconvolve;
    if d.kind == DeconvolveKind::Field {
        let (Some(pl), Some(resp)) = (&d.pl, &d.response) else {
            return Err(CliError::input("deconvolve.kind = field needs deconvolve.pl and deconvolve.response"));
        };
        let pl = out.load_field(pl)?;
        let resp = out.load_field(resp)?;
        let est = deconvolve_field(&pl, &resp, d.method)?;
        return out.field("estimate.csv", &est);
    }
    let (pl, response) = match (&d.pl, &d.response) {
        (Some(pl), Some(r)) => (out.load_series(pl)?, out.load_series(r)?),
        (None, None) => {
            if !(d.step > 0.0) || d.points < 2 {
                return Err(CliError::input("deconvolve.step must be > 0 and points >= 2"));
            }
            let h = d.response_half_points as i64;
            let offsets: Vec<f64> = (-h..=h).map(|i| i as f64 * d.step).collect();
            let r = offsets.iter().map(|&x| fc_at(&d.field, [x, 0.0, d.z], 0.0)).collect();
            let response = Series::new(offsets, r, Unit::Nm, Unit::Normalized)?;
            let x: Vec<f64> = (0..d.points).map(|i| i as f64 * d.step).collect();
            let e = x
                .iter()
                .map(|&v| d.features.iter().map(|[a, c, w]| a * (-0.5 * ((v - c) / w).powi(2)).exp()).sum())
                .collect();
            let sample = Series::new(x, e, Unit::Nm, Unit::Normalized)?;
            let mut pl = convolve_sample(&sample, &response)?;
            if d.noise > 0.0 {
                let noise = Normal::new(0.0, d.noise * pl.max_y())
                    .map_err(|e| CliError::input(format!("deconvolve.noise: {e}")))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for y in &mut pl.y {
                    *y += noise.sample(&mut rng);
                }
            } else if d.noise < 0.0 {
                return Err(CliError::input("deconvolve.noise must be >= 0"));
            }
            out.series("sample.csv", &sample)?;
            out.series("pl.csv", &pl)?;
            out.series("response.csv", &response)?;
            (pl, response)
        }
        _ => return Err(CliError::input("deconvolve.pl and deconvolve.response must be given together")),
    };
    let est = field_ops::deconvolve(&pl, &response, d.method)?;
    out.series("estimate.csv", &est)
}

pub fn g2(cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let h = &cfg.hbt;
    if !(h.bin_width > 0.0) || !(h.max_delay >= h.bin_width) {
        return Err(CliError::input("hbt: need 0 < bin_width <= max_delay"));
    }
    let n = (h.max_delay / h.bin_width).round() as usize;
    let tau: Vec<f64> = (0..=n).map(|k| k as f64 * h.bin_width).collect();
    out.series("g2.csv", &g2_rate_model(&h.rates, &tau)?)?;
    if h.simulate {
        let opts = HbtOptions {
            total_time: h.total_time,
            bin_width: h.bin_width,
            max_delay: h.max_delay,
            seed,
            dark_count_rate: h.dark_count_rate,
        };
        let hist = hbt_histogram(&h.rates, &opts)?;
        let model = g2_rate_model(&h.rates, &hist.counts.x)?;
        let mut table = Table::new(&["tau_ns", "counts", "g2", "model"]);
        for i in 0..hist.counts.len() {
            table.row(&[hist.counts.x[i], hist.counts.y[i], hist.normalized.y[i], model.y[i]]);
        }
        out.table("hbt.csv", &table)?;
    }
    Ok(())
}

pub fn spin(cfg: &Config, out: &mut OutputDir) -> Result<(), CliError> {
    let s = &cfg.spin;
    let mut params = s.params;
    if let Some(b) = s.field_tesla {
        params.zeeman_split = 2.0 * s.gyromagnetic_ratio * b.abs();
    }
    let nu = grid(s.nu_start, s.nu_stop, s.nu_points, "spin frequency grid")?;
    let t = grid(0.0, s.rabi_duration, s.rabi_points, "rabi durations")?;
    out.series("esr.csv", &esr_spectrum(&params, &nu)?)?;
    out.series("rabi.csv", &rabi_trace(&params, &t)?)
}
