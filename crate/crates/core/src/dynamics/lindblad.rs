//! Master-equation integration on the single-excitation subspace
//! `{|e,0>, |g,1>, |g,0>}`.

use nalgebra::Matrix3;
use num_complex::Complex64;

use super::ode::{integrate, IntegratorOptions};
use crate::error::{Error, Result, Violation};
use crate::model::{CoupledSystemParams, Validate};

/// Default tolerance for the density-matrix invariants.
pub const STATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Matrix3<Complex64>);

impl DensityMatrix {
    pub const EXCITED_VACUUM: usize = 0;
    pub const GROUND_PHOTON: usize = 1;
    pub const GROUND_VACUUM: usize = 2;

    /// Wraps a matrix after checking hermiticity, unit trace and positivity.
    pub fn new(m: Matrix3<Complex64>) -> Result<Self> {
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    /// The projector onto basis state `i`.
    pub fn basis(i: usize) -> Self {
        let mut m = Matrix3::zeros();
        m[(i, i)] = Complex64::new(1.0, 0.0);
        Self(m)
    }

    /// `|psi><psi|` for a normalized state vector.
    pub fn pure(psi: [Complex64; 3]) -> Result<Self> {
        let v = nalgebra::Vector3::from(psi);
        Self::new(v * v.adjoint())
    }

    pub fn matrix(&self) -> &Matrix3<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// `<a> = Tr(a rho) = <g,1|rho|g,0>`.
    pub fn expect_a(&self) -> Complex64 {
        self.0[(Self::GROUND_PHOTON, Self::GROUND_VACUUM)]
    }

    /// `<sigma> = Tr(sigma rho) = <e,0|rho|g,0>`.
    pub fn expect_sigma(&self) -> Complex64 {
        self.0[(Self::EXCITED_VACUUM, Self::GROUND_VACUUM)]
    }

    pub fn population(&self, i: usize) -> f64 {
        self.0[(i, i)].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().min()
    }

    pub fn violations_within(&self, tol: f64) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.hermiticity_error() > tol {
            v.push(Violation::new("rho", "must be Hermitian"));
        }
        if (self.trace() - 1.0).norm() > tol {
            v.push(Violation::new("rho", "trace must equal 1"));
        }
        if self.min_eigenvalue() < -tol {
            v.push(Violation::new("rho", "must be positive semidefinite"));
        }
        v
    }
}

impl Validate for DensityMatrix {
    fn violations(&self) -> Vec<Violation> {
        self.violations_within(STATE_TOLERANCE)
    }
}

struct Liouvillian {
    h: Matrix3<Complex64>,
    a: Matrix3<Complex64>,
    sigma: Matrix3<Complex64>,
    sigma_z: Matrix3<Complex64>,
    kappa: f64,
    gamma: f64,
    gamma_d: f64,
}

impl Liouvillian {
    fn new(p: &CoupledSystemParams) -> Self {
        let c = |re: f64| Complex64::new(re, 0.0);
        let (e0, g1, g0) = (
            DensityMatrix::EXCITED_VACUUM,
            DensityMatrix::GROUND_PHOTON,
            DensityMatrix::GROUND_VACUUM,
        );
        let mut a = Matrix3::zeros();
        a[(g0, g1)] = c(1.0);
        let mut sigma = Matrix3::zeros();
        sigma[(g0, e0)] = c(1.0);
        let sigma_z = Matrix3::from_diagonal(&nalgebra::Vector3::new(c(1.0), c(-1.0), c(-1.0)));
        // Emitter at -detuning/2, cavity at +detuning/2 relative to the frame.
        let mut h = Matrix3::zeros();
        h[(g1, g1)] = c(0.5 * p.detuning);
        h[(e0, e0)] = c(-0.5 * p.detuning);
        // i g (sigma a^dag - a sigma^dag)
        h[(g1, e0)] = Complex64::new(0.0, p.g);
        h[(e0, g1)] = Complex64::new(0.0, -p.g);
        Self {
            h,
            a,
            sigma,
            sigma_z,
            kappa: p.kappa,
            gamma: p.gamma,
            gamma_d: p.gamma_d,
        }
    }

    fn apply(&self, rho: &Matrix3<Complex64>) -> Matrix3<Complex64> {
        let i = Complex64::new(0.0, 1.0);
        let mut d = (self.h * rho - rho * self.h) * (-i);
        d += dissipator(&self.a, rho) * Complex64::new(0.5 * self.kappa, 0.0);
        d += dissipator(&self.sigma, rho) * Complex64::new(0.5 * self.gamma, 0.0);
        d += (self.sigma_z * rho * self.sigma_z - rho) * Complex64::new(0.5 * self.gamma_d, 0.0);
        d
    }
}

// 2 L rho L^dag - L^dag L rho - rho L^dag L
fn dissipator(l: &Matrix3<Complex64>, rho: &Matrix3<Complex64>) -> Matrix3<Complex64> {
    let ld = l.adjoint();
    let ldl = ld * l;
    l * rho * ld * Complex64::new(2.0, 0.0) - ldl * rho - rho * ldl
}

fn to_array(m: &Matrix3<Complex64>) -> [Complex64; 9] {
    let mut out = [Complex64::new(0.0, 0.0); 9];
    out.copy_from_slice(m.as_slice());
    out
}

/// Integrates the master equation from `rho0` at `t = 0` and returns the state
/// at every time in `t_grid` (non-negative, strictly increasing).
pub fn lindblad_evolve(
    params: &CoupledSystemParams,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<DensityMatrix>> {
    params.validate()?;
    super::check_time_grid(t_grid)?;
    let l = Liouvillian::new(params);
    let states = integrate(
        |_, y: &[Complex64; 9], dy: &mut [Complex64; 9]| {
            let rho = Matrix3::from_column_slice(y);
            dy.copy_from_slice(l.apply(&rho).as_slice());
        },
        to_array(&rho0.0),
        t_grid,
        opts,
    )?;
    let out: Vec<DensityMatrix> = states
        .iter()
        .map(|s| DensityMatrix(Matrix3::from_column_slice(s)))
        .collect();
    for (t, rho) in t_grid.iter().zip(&out) {
        if (rho.trace() - 1.0).norm() > 1e3 * opts.rtol.max(1e-12) {
            return Err(Error::ToleranceNotMet {
                t: *t,
                rtol: opts.rtol,
            });
        }
    }
    Ok(out)
}
