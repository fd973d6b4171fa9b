use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{baseline_at, detection_factor, ModeLine};
use crate::error::{Error, Result};
use crate::lsq::{self, LeastSquaresProblem, LmOptions};
use crate::model::{omega_from_wavelength, DetectionCoeffs, Spectrum, Unit, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    /// nm
    pub lambda_c: f64,
    pub q_factor: f64,
    pub f_c: f64,
}

impl ModeEstimate {
    pub fn line(&self) -> ModeLine {
        ModeLine::from_wavelength(self.lambda_c, self.q_factor, self.f_c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// sigma^2 = max(counts, 1)
    #[default]
    Poisson,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub data_sha256: String,
    pub baseline_sha256: String,
    pub init_modes: Vec<ModeEstimate>,
    pub init_coeffs: DetectionCoeffs,
    pub fixed: Vec<String>,
    pub weighting: Weighting,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub modes: Vec<ModeEstimate>,
    pub coeffs: DetectionCoeffs,
    pub residual_rms: f64,
    /// Names of the fitted parameters, in covariance order.
    pub free_parameters: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub stderr: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted objective after each accepted step.
    pub objective_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<FitProvenance>,
}

impl SpectrumFit {
    /// An initial guess for [`fit_spectrum`].
    pub fn guess(modes: Vec<ModeEstimate>, coeffs: DetectionCoeffs) -> Self {
        Self {
            modes,
            coeffs,
            residual_rms: 0.0,
            free_parameters: Vec::new(),
            covariance: Vec::new(),
            stderr: BTreeMap::new(),
            iterations: 0,
            converged: false,
            objective_history: Vec::new(),
            provenance: None,
        }
    }

    pub fn lines(&self) -> Vec<ModeLine> {
        self.modes.iter().map(ModeEstimate::line).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFitOptions {
    /// Parameter names held at their initial values: `lambda_c.<i>`,
    /// `q_factor.<i>`, `f_c.<i>`, `c_nv`, `c_cav`, `c_int`, `delta_phi`.
    pub fixed: BTreeSet<String>,
    pub weighting: Weighting,
    pub max_iterations: usize,
}

impl SpectrumFitOptions {
    /// Multi-mode fiber: no interference; `c_cav` fixed since only `c_cav * f_c` is observable.
    pub fn multimode() -> Self {
        Self {
            fixed: ["c_cav", "c_int", "delta_phi"].map(String::from).into(),
            weighting: Weighting::Poisson,
            max_iterations: 200,
        }
    }

    /// Single-mode fiber: interference amplitude and phase are fitted with
    /// each `f_c` held at a value known from a multi-mode fit. Per mode the
    /// line shape only constrains the Lorentzian and dispersive weights, so
    /// `f_c`, `c_int` and `delta_phi` cannot all be free.
    pub fn single_mode_fiber(n_modes: usize) -> Self {
        let mut fixed: BTreeSet<String> = (0..n_modes).map(|i| format!("f_c.{i}")).collect();
        fixed.insert("c_cav".into());
        Self {
            fixed,
            ..Self::multimode()
        }
    }
}

impl Default for SpectrumFitOptions {
    fn default() -> Self {
        Self::multimode()
    }
}

fn parameter_names(n_modes: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * n_modes + 4);
    for i in 0..n_modes {
        names.push(format!("lambda_c.{i}"));
        names.push(format!("q_factor.{i}"));
        names.push(format!("f_c.{i}"));
    }
    names.extend(["c_nv", "c_cav", "c_int", "delta_phi"].map(String::from));
    names
}

fn pack(init: &SpectrumFit) -> Vec<f64> {
    let mut v: Vec<f64> = init
        .modes
        .iter()
        .flat_map(|m| [m.lambda_c, m.q_factor, m.f_c])
        .collect();
    let c = &init.coeffs;
    v.extend([c.c_nv, c.c_cav, c.c_int, c.delta_phi]);
    v
}

fn unpack(full: &[f64], n_modes: usize) -> (Vec<ModeEstimate>, DetectionCoeffs) {
    let modes = (0..n_modes)
        .map(|i| ModeEstimate {
            lambda_c: full[3 * i],
            q_factor: full[3 * i + 1],
            f_c: full[3 * i + 2],
        })
        .collect();
    let k = 3 * n_modes;
    let coeffs = DetectionCoeffs {
        c_nv: full[k],
        c_cav: full[k + 1],
        c_int: full[k + 2],
        delta_phi: full[k + 3],
    };
    (modes, coeffs)
}

struct SpectrumProblem {
    omega: Vec<f64>,
    base: Vec<f64>,
    y: Vec<f64>,
    inv_sigma: Vec<f64>,
    full: Vec<f64>,
    free: Vec<usize>,
    n_modes: usize,
}

impl SpectrumProblem {
    fn expand(&self, p: &[f64]) -> Vec<f64> {
        let mut full = self.full.clone();
        for (k, &idx) in self.free.iter().enumerate() {
            full[idx] = p[k];
        }
        full
    }

    fn model(&self, full: &[f64], out: &mut [f64]) {
        let (modes, coeffs) = unpack(full, self.n_modes);
        let lines: Vec<ModeLine> = modes.iter().map(ModeEstimate::line).collect();
        for i in 0..self.omega.len() {
            out[i] = self.base[i] * detection_factor(&coeffs, &lines, self.omega[i]);
        }
    }
}

impl LeastSquaresProblem for SpectrumProblem {
    fn n_residuals(&self) -> usize {
        self.y.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let full = self.expand(p);
        self.model(&full, out);
        for i in 0..out.len() {
            out[i] = (out[i] - self.y[i]) * self.inv_sigma[i];
        }
    }

    fn feasible(&self, p: &[f64]) -> bool {
        let full = self.expand(p);
        let (modes, c) = unpack(&full, self.n_modes);
        modes
            .iter()
            .all(|m| m.lambda_c > 0.0 && m.q_factor > 0.0 && m.f_c >= 0.0)
            && c.validate().is_ok()
    }

    fn scale(&self, j: usize) -> f64 {
        let idx = self.free[j];
        if idx < 3 * self.n_modes && idx % 3 != 2 {
            // wavelengths and Q factors: relative steps
            self.full[idx].abs().max(1.0)
        } else {
            1.0
        }
    }
}

/// Damped least-squares fit of the detected-spectrum model to `data`.
///
/// Deterministic for identical inputs. Hitting the iteration cap returns
/// `converged = false` rather than an error.
pub fn fit_spectrum(
    data: &Spectrum,
    nv_baseline: &Spectrum,
    init: &SpectrumFit,
    opts: &SpectrumFitOptions,
) -> Result<SpectrumFit> {
    data.validate()?;
    nv_baseline.validate()?;
    if init.modes.is_empty() {
        return Err(Error::violation("modes", "at least one mode is required"));
    }
    init.coeffs.validate()?;
    let names = parameter_names(init.modes.len());
    if let Some(bad) = opts.fixed.iter().find(|f| !names.contains(f)) {
        return Err(Error::violation("fixed", format!("unknown parameter `{bad}`")));
    }
    let free: Vec<usize> = (0..names.len())
        .filter(|&i| !opts.fixed.contains(&names[i]))
        .collect();

    let (mut omega, mut base, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (&x, &v) in data.x.iter().zip(&data.y) {
        let w = match data.x_unit {
            Unit::Nm => omega_from_wavelength(x),
            _ => x,
        };
        if let Ok(b) = baseline_at(nv_baseline, w) {
            omega.push(w);
            base.push(b);
            y.push(v);
        }
    }
    if y.len() <= free.len() {
        return Err(Error::NoOverlap);
    }
    let inv_sigma = y
        .iter()
        .map(|&v| match opts.weighting {
            Weighting::Poisson => 1.0 / v.max(1.0).sqrt(),
            Weighting::Uniform => 1.0,
        })
        .collect();
    let full = pack(init);
    let prob = SpectrumProblem {
        omega,
        base,
        y,
        inv_sigma,
        full: full.clone(),
        free: free.clone(),
        n_modes: init.modes.len(),
    };
    let p0: Vec<f64> = free.iter().map(|&i| full[i]).collect();
    let free_names: Vec<String> = free.iter().map(|&i| names[i].clone()).collect();
    if !prob.feasible(&p0) {
        return Err(Error::violation("init", "initial guess violates parameter bounds"));
    }
    lsq::check_rank(&lsq::jacobian(&prob, &p0), &free_names)?;

    let lm = lsq::minimize(
        &prob,
        &p0,
        &LmOptions {
            max_iterations: opts.max_iterations,
            ..Default::default()
        },
    )?;
    let best = prob.expand(&lm.params);
    let mut model = vec![0.0; prob.y.len()];
    prob.model(&best, &mut model);
    let residual_rms = (model
        .iter()
        .zip(&prob.y)
        .map(|(m, d)| (m - d).powi(2))
        .sum::<f64>()
        / model.len() as f64)
        .sqrt();
    let cov = lm.covariance();
    let stderr = free_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), cov[(i, i)].max(0.0).sqrt()))
        .collect();
    let (modes, coeffs) = unpack(&best, init.modes.len());
    Ok(SpectrumFit {
        modes,
        coeffs,
        residual_rms,
        covariance: (0..free.len())
            .map(|i| (0..free.len()).map(|j| cov[(i, j)]).collect())
            .collect(),
        free_parameters: free_names,
        stderr,
        iterations: lm.iterations,
        converged: lm.converged,
        objective_history: lm.cost_history,
        provenance: Some(FitProvenance {
            data_sha256: data.sha256(),
            baseline_sha256: nv_baseline.sha256(),
            init_modes: init.modes.clone(),
            init_coeffs: init.coeffs,
            fixed: opts.fixed.iter().cloned().collect(),
            weighting: opts.weighting,
            max_iterations: opts.max_iterations,
        }),
    })
}
