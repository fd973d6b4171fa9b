//! Open-system emitter-cavity dynamics in the single-excitation subspace.
//!
//! The mean cavity field `<a>` and emitter coherence `<sigma>` obey the
//! Maxwell-Bloch pair
//!
//! ```text
//! d<a>/dt     = c1 <a> + g <sigma>,      c1 = -i detuning/2 - kappa/2
//! d<sigma>/dt = c2 <sigma> - g <a>,      c2 =  i detuning/2 - gamma/2 - gamma_d
//! ```
//!
//! with eigenvalues `(c1 + c2 +- D) / 2`, `D = sqrt((c1 - c2)^2 - 4 g^2)`.
//! [`amplitude_trajectory`] evaluates the closed form, [`lindblad_evolve`]
//! integrates the full master equation, and [`emission_spectrum_numeric`]
//! Fourier transforms the emitted field analytically.

mod lindblad;
mod ode;

pub use lindblad::{lindblad_evolve, DensityMatrix, STATE_TOLERANCE};
pub use ode::IntegratorOptions;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoupledSystemParams, DetectionCoeffs, Series, Spectrum, Unit, Validate};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenRates {
    pub c1: Complex64,
    pub c2: Complex64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub discriminant_root: Complex64,
}

pub fn eigenrates(p: &CoupledSystemParams) -> EigenRates {
    let c1 = -I * (0.5 * p.detuning) - 0.5 * p.kappa;
    let c2 = I * (0.5 * p.detuning) - 0.5 * p.gamma - p.gamma_d;
    let mut d = ((c1 - c2) * (c1 - c2) - 4.0 * p.g * p.g).sqrt();
    // principal root has Re >= 0; on the cut prefer Im >= 0
    if d.re == 0.0 && d.im < 0.0 {
        d = -d;
    }
    EigenRates {
        c1,
        c2,
        lambda_plus: 0.5 * (c1 + c2 + d),
        lambda_minus: 0.5 * (c1 + c2 - d),
        discriminant_root: d,
    }
}

/// Closed-form `(a(t), sigma(t))` from `a(0) = 0`, `sigma(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitudes {
    pub t: Vec<f64>,
    pub a: Vec<Complex64>,
    pub sigma: Vec<Complex64>,
}

pub(crate) fn check_time_grid(t: &[f64]) -> Result<()> {
    if let Some(&t0) = t.first() {
        if !(t0 >= 0.0) {
            return Err(Error::NonMonotonicGrid { index: 0 });
        }
    }
    if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotonicGrid { index: i + 1 });
    }
    Ok(())
}

/// Evaluates the analytic single-excitation solution on `t_grid`.
///
/// When `|D t / 2|` is small the exponential difference is replaced by its
/// series in `D`, which contains the degenerate limit `a = g t e^{(c1+c2)t/2}`.
pub fn amplitude_trajectory(p: &CoupledSystemParams, t_grid: &[f64]) -> Result<Amplitudes> {
    p.validate()?;
    check_time_grid(t_grid)?;
    let r = eigenrates(p);
    let (mut a, mut sigma) = (Vec::with_capacity(t_grid.len()), Vec::with_capacity(t_grid.len()));
    for &t in t_grid {
        let (at, st) = amplitude_at(&r, p.g, t);
        a.push(at);
        sigma.push(st);
    }
    Ok(Amplitudes {
        t: t_grid.to_vec(),
        a,
        sigma,
    })
}

fn amplitude_at(r: &EigenRates, g: f64, t: f64) -> (Complex64, Complex64) {
    let d = r.discriminant_root;
    let diff = r.c1 - r.c2;
    let z = 0.5 * d * t;
    if z.norm() < 1e-4 {
        let z2 = z * z;
        let sinhc = 1.0 + z2 / 6.0 + z2 * z2 / 120.0;
        let cosh = 1.0 + z2 / 2.0 + z2 * z2 / 24.0;
        let es = (0.5 * (r.c1 + r.c2) * t).exp();
        (g * t * es * sinhc, es * (cosh - diff * (0.5 * t) * sinhc))
    } else {
        let ep = (r.lambda_plus * t).exp();
        let em = (r.lambda_minus * t).exp();
        (
            g * (ep - em) / d,
            (diff * (em - ep) + d * (em + ep)) / (2.0 * d),
        )
    }
}

fn check_decaying(r: &EigenRates) -> Result<()> {
    for l in [r.lambda_plus, r.lambda_minus] {
        if l.re >= 0.0 {
            return Err(Error::DivergentIntegral { re: l.re });
        }
    }
    Ok(())
}

/// Fourier amplitude of the detected field, `int_0^inf eps(t) e^{i w t} dt`.
fn field_transform(p: &CoupledSystemParams, c: &DetectionCoeffs, r: &EigenRates, omega: f64) -> Complex64 {
    // (z - M)^{-1} (0, 1)^T with z = -i omega, M = [[c1, g], [-g, c2]]
    let z = -I * omega;
    let det = (z - r.c1) * (z - r.c2) + p.g * p.g;
    let a_hat = p.g / det;
    let s_hat = (z - r.c1) / det;
    (c.c_nv * p.gamma).sqrt() * s_hat
        + Complex64::from_polar(1.0, c.delta_phi) * (c.c_cav * p.kappa).sqrt() * a_hat
}

/// Scale applied to `|eps_hat|^2` so the bare emitter (g = 0) peaks at `c_nv`.
pub fn spectrum_normalization(p: &CoupledSystemParams) -> Result<f64> {
    if !(p.gamma > 0.0) {
        return Err(Error::ZeroRate("gamma"));
    }
    Ok((0.5 * p.gamma + p.gamma_d).powi(2) / p.gamma)
}

/// Emission spectrum of the decaying single excitation on `omega_grid`
/// (rad/ns, measured from the frame midway between emitter and cavity).
///
/// The field amplitude is `sqrt(c_nv gamma) sigma(t) + e^{i dphi} sqrt(c_cav kappa) a(t)`;
/// its transform is exact because the solution is a sum of exponentials.
pub fn emission_spectrum_numeric(
    p: &CoupledSystemParams,
    coeffs: &DetectionCoeffs,
    omega_grid: &[f64],
) -> Result<Spectrum> {
    p.validate()?;
    coeffs.validate()?;
    let r = eigenrates(p);
    check_decaying(&r)?;
    let norm = spectrum_normalization(p)?;
    let y = omega_grid
        .iter()
        .map(|&w| norm * field_transform(p, coeffs, &r, w).norm_sqr())
        .collect();
    Series::new(omega_grid.to_vec(), y, Unit::RadPerNs, Unit::Normalized)
}

/// `int_0^inf |eps(t)|^2 dt`, from the Lyapunov equation `M X + X M^dag = -x0 x0^dag`.
///
/// By Parseval, the spectrum integrates to `2 pi * spectrum_normalization * this`.
pub fn detected_photon_number(p: &CoupledSystemParams, coeffs: &DetectionCoeffs) -> Result<f64> {
    p.validate()?;
    let r = eigenrates(p);
    check_decaying(&r)?;
    let g = Complex64::new(p.g, 0.0);
    let m = [[r.c1, g], [-g, r.c2]];
    // unknown X flattened as (00, 01, 10, 11)
    let mut sys = Matrix4::<Complex64>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let row = 2 * i + j;
            for k in 0..2 {
                sys[(row, 2 * k + j)] += m[i][k];
                sys[(row, 2 * i + k)] += m[j][k].conj();
            }
        }
    }
    let rhs = Vector4::new(
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(-1.0, 0.0),
    );
    let x = sys
        .lu()
        .solve(&rhs)
        .ok_or(Error::DivergentIntegral { re: 0.0 })?;
    let v = [
        Complex64::from_polar(1.0, coeffs.delta_phi) * (coeffs.c_cav * p.kappa).sqrt(),
        Complex64::new((coeffs.c_nv * p.gamma).sqrt(), 0.0),
    ];
    let mut total = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            total += v[i] * x[2 * i + j] * v[j].conj();
        }
    }
    Ok(total.re)
}

/// Purcell factor `g^2 / (kappa gamma)` with `kappa` the energy decay rate.
pub fn purcell_factor(p: &CoupledSystemParams) -> Result<f64> {
    if !(p.kappa > 0.0) {
        return Err(Error::ZeroRate("kappa"));
    }
    if !(p.gamma > 0.0) {
        return Err(Error::ZeroRate("gamma"));
    }
    Ok(p.g * p.g / (p.kappa * p.gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    fn params(detuning: f64, g: f64, kappa: f64, gamma: f64, gamma_d: f64) -> CoupledSystemParams {
        CoupledSystemParams {
            detuning,
            g,
            kappa,
            gamma,
            gamma_d,
        }
    }

    #[test]
    fn decoupled_eigenvalues() {
        let r = eigenrates(&params(0.7, 0.0, 1.0, 0.3, 0.2));
        let mut got = [r.lambda_plus, r.lambda_minus];
        let mut want = [r.c1, r.c2];
        got.sort_by(|a, b| a.re.total_cmp(&b.re));
        want.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!(close(got[0], want[0], 1e-14) && close(got[1], want[1], 1e-14));
    }

    #[test]
    fn strong_coupling_eigenvalues() {
        let r = eigenrates(&params(0.0, 1.0, 2.0, 0.0, 0.0));
        assert!(close(r.c1, Complex64::new(-1.0, 0.0), 1e-15));
        assert!(close(r.c2, Complex64::new(0.0, 0.0), 1e-15));
        let s3 = 3f64.sqrt();
        assert!(close(r.discriminant_root, Complex64::new(0.0, s3), 1e-14));
        assert!(close(r.lambda_plus, Complex64::new(-0.5, 0.5 * s3), 1e-14));
        assert!(close(r.lambda_minus, Complex64::new(-0.5, -0.5 * s3), 1e-14));
        // characteristic polynomial of [[c1, g], [-g, c2]]
        for l in [r.lambda_plus, r.lambda_minus] {
            let poly = (l - r.c1) * (l - r.c2) + 1.0;
            assert!(poly.norm() < 1e-14);
        }
    }

    #[test]
    fn degenerate_eigenvalues() {
        let r = eigenrates(&params(0.0, 0.0, 1.5, 1.5, 0.0));
        assert!(close(r.lambda_plus, Complex64::new(-0.75, 0.0), 1e-15));
        assert!(close(r.lambda_minus, Complex64::new(-0.75, 0.0), 1e-15));
    }

    #[test]
    fn initial_conditions_and_slopes() {
        let p = params(1.1, 0.9, 2.3, 0.4, 0.6);
        let h = 1e-5;
        let amp = amplitude_trajectory(&p, &[0.0, h, 2.0 * h]).unwrap();
        assert_eq!(amp.a[0], Complex64::new(0.0, 0.0));
        assert!(close(amp.sigma[0], Complex64::new(1.0, 0.0), 1e-15));
        let r = eigenrates(&p);
        // second-order one-sided difference
        let da = (-3.0 * amp.a[0] + 4.0 * amp.a[1] - amp.a[2]) / (2.0 * h);
        let ds = (-3.0 * amp.sigma[0] + 4.0 * amp.sigma[1] - amp.sigma[2]) / (2.0 * h);
        assert!(close(da, Complex64::new(p.g, 0.0), 1e-8));
        assert!(close(ds, r.c2, 1e-8));
    }

    #[test]
    fn decoupled_amplitudes() {
        let p = params(0.4, 0.0, 1.0, 0.5, 0.1);
        let ts = [0.0, 0.3, 2.0, 9.0];
        let amp = amplitude_trajectory(&p, &ts).unwrap();
        let c2 = eigenrates(&p).c2;
        for (i, t) in ts.iter().enumerate() {
            assert_eq!(amp.a[i], Complex64::new(0.0, 0.0));
            assert!(close(amp.sigma[i], (c2 * *t).exp(), 1e-14));
        }
    }

    #[test]
    fn degenerate_branch_is_continuous() {
        // D = 0 exactly when kappa/2 - gamma/2 - gamma_d = 2g and detuning = 0
        let g = 0.5;
        let exact = params(0.0, g, 3.0, 0.5, 0.25);
        let r = eigenrates(&exact);
        assert!(r.discriminant_root.norm() < 1e-12);
        let near = params(0.0, g, 3.0 + 1e-5, 0.5, 0.25);
        let ts: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let a = amplitude_trajectory(&exact, &ts).unwrap();
        let b = amplitude_trajectory(&near, &ts).unwrap();
        for i in 0..ts.len() {
            assert!(close(a.a[i], b.a[i], 1e-5));
            assert!(close(a.sigma[i], b.sigma[i], 1e-5));
            let t = ts[i];
            let s = 0.5 * (r.c1 + r.c2);
            assert!(close(a.a[i], g * t * (s * t).exp(), 1e-14));
        }
    }

    #[test]
    fn bare_emitter_spectrum_is_lorentzian() {
        let p = params(2.0, 0.0, 1.0, 0.2, 0.3);
        let c = DetectionCoeffs::incoherent(1.7, 1.0);
        let center = -1.0; // emitter sits at -detuning/2
        let fwhm = p.gamma + 2.0 * p.gamma_d;
        let s = emission_spectrum_numeric(&p, &c, &[center - 0.5 * fwhm, center, center + 0.5 * fwhm])
            .unwrap();
        assert!((s.y[1] - 1.7).abs() < 1e-12);
        assert!((s.y[0] - 0.85).abs() < 1e-12);
        assert!((s.y[2] - 0.85).abs() < 1e-12);
    }

    #[test]
    fn no_cavity_channel_means_no_phase_dependence() {
        let p = params(0.5, 0.7, 1.0, 0.2, 0.3);
        let grid: Vec<f64> = (0..50).map(|i| -3.0 + 0.12 * i as f64).collect();
        let mk = |dphi| DetectionCoeffs {
            c_nv: 1.0,
            c_cav: 0.0,
            c_int: 0.0,
            delta_phi: dphi,
        };
        let a = emission_spectrum_numeric(&p, &mk(0.0), &grid).unwrap();
        let b = emission_spectrum_numeric(&p, &mk(2.1), &grid).unwrap();
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn undamped_system_diverges() {
        let p = params(1.0, 0.0, 0.0, 0.0, 0.0);
        let c = DetectionCoeffs::incoherent(1.0, 1.0);
        assert!(matches!(
            emission_spectrum_numeric(&p, &c, &[0.0]),
            Err(Error::DivergentIntegral { .. })
        ));
    }

    #[test]
    fn purcell_definition() {
        let base = params(0.0, 0.0, 2.0, 0.5, 0.0);
        assert_eq!(purcell_factor(&base).unwrap(), 0.0);
        let unit = params(0.0, 1.0, 2.0, 0.5, 0.0);
        assert!((purcell_factor(&unit).unwrap() - 1.0).abs() < 1e-15);
        let doubled = params(0.0, 2.0, 2.0, 0.5, 0.0);
        assert!((purcell_factor(&doubled).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(
            purcell_factor(&params(0.0, 1.0, 0.0, 0.5, 0.0)),
            Err(Error::ZeroRate("kappa"))
        ));
    }
}
