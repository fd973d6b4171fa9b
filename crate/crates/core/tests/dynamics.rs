use num_complex::Complex64;
use proptest::prelude::*;
use scm_core::dynamics::{
    amplitude_trajectory, detected_photon_number, eigenrates, emission_spectrum_numeric,
    lindblad_evolve, purcell_factor, spectrum_normalization, DensityMatrix, IntegratorOptions,
};
use scm_core::{CoupledSystemParams, DetectionCoeffs};

const I: Complex64 = Complex64::new(0.0, 1.0);

fn params() -> impl Strategy<Value = CoupledSystemParams> {
    (-5.0..5.0f64, 0.0..3.0f64, 0.05..5.0f64, 0.05..1.0f64, 0.0..2.0f64).prop_map(
        |(detuning, g, kappa, gamma, gamma_d)| CoupledSystemParams {
            detuning,
            g,
            kappa,
            gamma,
            gamma_d,
        },
    )
}

fn coeffs() -> impl Strategy<Value = DetectionCoeffs> {
    (0.1..2.0f64, 0.1..2.0f64, 0.0..1.0f64, -3.2..3.2f64).prop_map(|(c_nv, c_cav, frac, delta_phi)| {
        DetectionCoeffs {
            c_nv,
            c_cav,
            c_int: frac * (c_nv * c_cav).sqrt(),
            delta_phi,
        }
    })
}

/// Right-hand side of the mean-field equations, written out from the rates.
fn rhs(p: &CoupledSystemParams, a: Complex64, s: Complex64) -> (Complex64, Complex64) {
    let da = (-0.5 * I * p.detuning - 0.5 * p.kappa) * a + p.g * s;
    let ds = (0.5 * I * p.detuning - 0.5 * p.gamma - p.gamma_d) * s - p.g * a;
    (da, ds)
}

fn field(p: &CoupledSystemParams, c: &DetectionCoeffs, a: Complex64, s: Complex64) -> Complex64 {
    (c.c_nv * p.gamma).sqrt() * s + Complex64::from_polar(1.0, c.delta_phi) * (c.c_cav * p.kappa).sqrt() * a
}

fn simpson(h: f64, y: &[f64]) -> f64 {
    let n = y.len() - 1;
    assert!(n % 2 == 0);
    let mut s = y[0] + y[n];
    for (i, v) in y.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * v;
    }
    s * h / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigenvalues_sum_and_split(p in params()) {
        let r = eigenrates(&p);
        let sum = r.lambda_plus + r.lambda_minus;
        let diff = r.lambda_plus - r.lambda_minus;
        let d2 = (r.c1 - r.c2) * (r.c1 - r.c2) - 4.0 * p.g * p.g;
        prop_assert!((sum - (r.c1 + r.c2)).norm() < 1e-12);
        prop_assert!((diff - r.discriminant_root).norm() < 1e-12);
        prop_assert!((r.discriminant_root * r.discriminant_root - d2).norm() < 1e-10 * (1.0 + d2.norm()));
        prop_assert!(r.lambda_plus.re <= 1e-12 && r.lambda_minus.re <= 1e-12);
    }

    #[test]
    fn closed_form_satisfies_the_ode(p in params()) {
        let tmax = 3.0 / (0.5 * p.gamma).min(0.5 * p.kappa);
        let h = 1e-3;
        let ts: Vec<f64> = (0..40).map(|i| 4.0 * h + tmax * i as f64 / 39.0).collect();
        let mut stencil = Vec::new();
        for &t in &ts {
            stencil.extend([t - 2.0 * h, t - h, t, t + h, t + 2.0 * h]);
        }
        let amp = amplitude_trajectory(&p, &stencil).unwrap();
        let scale = amp.a.iter().chain(&amp.sigma).map(|z| z.norm()).fold(0.0, f64::max);
        for k in 0..ts.len() {
            let j = 5 * k;
            let d = |v: &[Complex64]| (-v[j + 4] + 8.0 * v[j + 3] - 8.0 * v[j + 1] + v[j]) / (12.0 * h);
            let (da, ds) = rhs(&p, amp.a[j + 2], amp.sigma[j + 2]);
            prop_assert!((d(&amp.a) - da).norm() < 1e-8 * scale, "a at t = {}", ts[k]);
            prop_assert!((d(&amp.sigma) - ds).norm() < 1e-8 * scale, "sigma at t = {}", ts[k]);
        }
    }

    #[test]
    fn purcell_factor_is_quadratic_in_g(p in params(), k in 0.1..4.0f64) {
        let f1 = purcell_factor(&p).unwrap();
        let f2 = purcell_factor(&CoupledSystemParams { g: k * p.g, ..p }).unwrap();
        prop_assert!((f2 - k * k * f1).abs() <= 1e-12 * (1.0 + f2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn master_equation_keeps_a_valid_state(
        p in params(),
        re in proptest::array::uniform3(-1.0..1.0f64),
        im in proptest::array::uniform3(-1.0..1.0f64),
    ) {
        let mut psi = [0, 1, 2].map(|i| Complex64::new(re[i], im[i]));
        let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(n > 0.1);
        for z in &mut psi {
            *z /= n;
        }
        let rho0 = DensityMatrix::pure(psi).unwrap();
        let t_end = 10.0 / p.gamma;
        let grid: Vec<f64> = (0..=200).map(|i| t_end * i as f64 / 200.0).collect();
        let states = lindblad_evolve(&p, &rho0, &grid, &IntegratorOptions::default()).unwrap();
        for rho in &states {
            prop_assert!((rho.trace() - 1.0).norm() < 1e-8);
            prop_assert!(rho.hermiticity_error() < 1e-8);
            prop_assert!(rho.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn spectrum_obeys_parseval(p in params(), c in coeffs()) {
        let r = eigenrates(&p);
        // map the real line onto (-pi/2, pi/2); the integrand becomes smooth and periodic
        let s = 0.5 * (r.lambda_plus.re.abs() + r.lambda_minus.re.abs())
            + r.lambda_plus.im.abs().max(r.lambda_minus.im.abs());
        let n = 40_000;
        let u: Vec<f64> = (0..n)
            .map(|i| -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * std::f64::consts::PI / n as f64)
            .collect();
        let omega: Vec<f64> = u.iter().map(|v| s * v.tan()).collect();
        let spec = emission_spectrum_numeric(&p, &c, &omega).unwrap();
        let integral: f64 = spec
            .y
            .iter()
            .zip(&u)
            .map(|(y, v)| y * s / v.cos().powi(2))
            .sum::<f64>()
            * std::f64::consts::PI
            / n as f64;
        let norm = spectrum_normalization(&p).unwrap();
        let photons = detected_photon_number(&p, &c).unwrap();
        let expected = 2.0 * std::f64::consts::PI * norm * photons;
        prop_assert!((integral / expected - 1.0).abs() < 1e-6, "{} vs {}", integral, expected);

        // the photon number itself against a direct time integral
        let slow = r.lambda_plus.re.abs().min(r.lambda_minus.re.abs());
        let fast = r.lambda_plus.norm().max(r.lambda_minus.norm());
        let t_end = 40.0 / slow;
        let steps = ((t_end * fast * 20.0) as usize).clamp(2000, 400_000) / 2 * 2;
        let h = t_end / steps as f64;
        let t: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        let amp = amplitude_trajectory(&p, &t).unwrap();
        let e2: Vec<f64> = amp.a.iter().zip(&amp.sigma).map(|(a, s)| field(&p, &c, *a, *s).norm_sqr()).collect();
        let direct = simpson(h, &e2);
        prop_assert!((direct / photons - 1.0).abs() < 1e-6, "{} vs {}", direct, photons);
    }
}

#[test]
fn bare_emitter_peaks_at_c_nv() {
    let p = CoupledSystemParams {
        detuning: 0.0,
        g: 0.0,
        kappa: 1.0,
        gamma: 0.06,
        gamma_d: 0.5,
    };
    let c = DetectionCoeffs::incoherent(0.7, 0.0);
    // g = 0: the emitter line sits at +detuning/2 in the midway frame
    let s = emission_spectrum_numeric(&p, &c, &[0.0]).unwrap();
    assert!((s.y[0] - 0.7).abs() < 1e-12);
}

#[test]
fn growing_rates_are_rejected() {
    let p = CoupledSystemParams {
        detuning: 0.0,
        g: 0.3,
        kappa: 0.0,
        gamma: 0.0,
        gamma_d: 0.0,
    };
    let c = DetectionCoeffs::incoherent(1.0, 1.0);
    assert!(detected_photon_number(&p, &c).is_err());
    assert!(purcell_factor(&p).is_err());
}
